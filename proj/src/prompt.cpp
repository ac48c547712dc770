// Copyright 2026 The counselkit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "prompt.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "error.hpp"

namespace counselkit::scoring {

namespace {

const Rubric& rubric_of(const PromptOptions& o) { return o.rubric ? *o.rubric : Rubric::builtin(); }

std::string fold_lines(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (c == '\n' || c == '\r') {
      pending_space = true;
      continue;
    }
    if (pending_space) {
      if (!out.empty() && out.back() != ' ') out.push_back(' ');
      pending_space = false;
    }
    out.push_back(c);
  }
  return out;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    pos = end + 1;
  }
  return lines;
}

std::string format_dialogue(const Episode& e, int max_turns, std::size_t& omitted) {
  const auto& ctx = e.context();
  std::size_t first = 0;
  if (max_turns > 0 && ctx.size() > static_cast<std::size_t>(max_turns)) {
    first = ctx.size() - static_cast<std::size_t>(max_turns);
  }
  omitted = first;
  std::string out = "### Dialogue context\n";
  if (omitted > 0) {
    out += "[" + std::to_string(omitted) + " earlier turns omitted; showing the last " +
           std::to_string(ctx.size() - first) + "]\n";
  }
  for (std::size_t i = first; i < ctx.size(); ++i) {
    out += ctx[i].speaker == Speaker::kClient ? "Client: " : "Counselor: ";
    out += ctx[i].text;
    out += '\n';
  }
  out += "\n### Counselor response to evaluate\nCounselor: ";
  out += e.response().text;
  out += '\n';
  return out;
}

std::string mechanism_list(const std::vector<Mechanism>& ms) {
  std::string out;
  for (auto m : ms) out += "- " + std::string(mechanism_key(m)) + " (" + std::string(mechanism_display_name(m)) + ")\n";
  return out;
}

std::string output_format_block(const std::vector<Mechanism>& ms, TargetMode mode) {
  std::string out = "RATINGS\n";
  for (auto m : ms) out += std::string(mechanism_key(m)) + ": <0|1|2>\n";
  if (mode == TargetMode::kWithExplanations) {
    for (auto m : ms) {
      out += "EXPLANATION " + std::string(mechanism_key(m)) + "\n";
      out += "resistance_analysis: <one line analysing the client's resistance>\n";
      out += "response_analysis: <one line analysing how the counselor's response expresses this mechanism>\n";
    }
  }
  return out;
}

}  // namespace

std::string_view prompt_mode_name(PromptMode m) { return m == PromptMode::kZeroShot ? "zero-shot" : "tuned"; }

PromptMode prompt_mode_from_name(std::string_view s) {
  auto k = lower(s);
  if (k == "zero-shot" || k == "zeroshot" || k == "zero_shot") return PromptMode::kZeroShot;
  if (k == "tuned") return PromptMode::kTuned;
  fail(ErrorCode::kInvalidArgument, "unknown prompt mode '" + std::string(s) + "' (zero-shot|tuned)");
}

std::string_view target_mode_name(TargetMode m) {
  return m == TargetMode::kWithExplanations ? "with_explanations" : "labels_only";
}

TargetMode target_mode_from_name(std::string_view s) {
  auto k = lower(s);
  std::replace(k.begin(), k.end(), '-', '_');
  if (k == "with_explanations" || k == "withexplanations") return TargetMode::kWithExplanations;
  if (k == "labels_only" || k == "labelsonly") return TargetMode::kLabelsOnly;
  fail(ErrorCode::kInvalidArgument, "unknown target mode '" + std::string(s) + "' (with_explanations|labels_only)");
}

std::string build_instruction(const Episode& episode, const PromptOptions& options) {
  const auto& rubric = rubric_of(options);
  std::string out =
      "Rate how the counselor's response to the client's resistance expresses each communication mechanism "
      "below, on the scale 0 = no expression, 1 = weak expression, 2 = strong expression.\n";
  for (auto m : options.mechanisms) {
    out += std::string(mechanism_key(m)) + ":\n";
    for (auto l : kLevels) {
      out += "  " + std::to_string(ordinal(l)) + " " + rubric.lookup(m, l).definition + "\n";
    }
  }
  out += options.target == TargetMode::kWithExplanations
             ? "Answer with the RATINGS block followed by one EXPLANATION block per mechanism.\n\n"
             : "Answer with the RATINGS block only.\n\n";
  std::size_t omitted = 0;
  out += format_dialogue(episode, options.max_context_turns, omitted);
  return out;
}

Prompt build_prompt(const Episode& episode, PromptMode mode, const PromptOptions& options) {
  Prompt p;
  if (mode == PromptMode::kTuned) {
    p.messages.push_back({"user", build_instruction(episode, options)});
    std::size_t omitted = 0;
    format_dialogue(episode, options.max_context_turns, omitted);
    p.omitted_turns = omitted;
    return p;
  }

  const auto& rubric = rubric_of(options);
  std::string system =
      "You are an experienced clinical supervisor reviewing text-based counseling sessions. Each case ends with a "
      "client utterance that shows resistance, followed by the counselor's next response. You assess that "
      "response along four communication mechanisms, each at one of three levels of expression:\n"
      "0 = No Expression (the mechanism is absent)\n"
      "1 = Weak Expression (present but only minimally articulated)\n"
      "2 = Strong Expression (clearly and substantively demonstrated)\n\n"
      "## Rubric\n";
  for (auto m : options.mechanisms) {
    system += "\n### " + std::string(mechanism_display_name(m)) + " (" + std::string(mechanism_key(m)) + ")\n";
    for (auto l : kLevels) {
      const auto& entry = rubric.lookup(m, l);
      system += "- " + std::to_string(ordinal(l)) + " " + std::string(level_display_name(l)) + ": " + entry.definition;
      if (!entry.exemplar.empty()) system += " Example: \"" + entry.exemplar + "\"";
      system += "\n";
    }
  }
  system += "\n## Output format\nReply with exactly these lines and nothing else:\n";
  system += output_format_block(options.mechanisms, options.target);
  p.messages.push_back({"system", std::move(system)});

  std::string user = format_dialogue(episode, options.max_context_turns, p.omitted_turns);
  user += "\n### Task\nAssess the counselor response for each mechanism:\n";
  user += mechanism_list(options.mechanisms);
  user += options.target == TargetMode::kWithExplanations
              ? "For every mechanism, first analyse the client's resistance, then analyse the counselor's response "
                "and the elements that justify the level you assign.\n"
              : "Give ratings only, without explanations.\n";
  p.messages.push_back({"user", std::move(user)});
  return p;
}

std::string format_correction_message(std::string_view problem, const PromptOptions& options) {
  return "Your previous reply could not be parsed (" + std::string(problem) +
         "). Reply again using exactly this format:\n" + output_format_block(options.mechanisms, options.target);
}

// ---- target grammar ----

std::string format_target(const PartialRatings& ratings, const ExplanationMap& explanations, TargetMode mode,
                          const std::vector<Mechanism>& mechanisms) {
  std::string out = "RATINGS";
  for (auto m : mechanisms) {
    auto it = ratings.find(m);
    if (it == ratings.end() || it->second < 0 || it->second > 2) {
      fail(ErrorCode::kInvalidArgument, "cannot serialize target: bad rating for " + std::string(mechanism_key(m)));
    }
    out += "\n" + std::string(mechanism_key(m)) + ": " + std::to_string(it->second);
  }
  if (mode == TargetMode::kWithExplanations) {
    for (auto m : mechanisms) {
      auto it = explanations.find(m);
      if (it == explanations.end() || !it->second.complete()) {
        fail(ErrorCode::kInvalidArgument,
             "cannot serialize target: missing explanation for " + std::string(mechanism_key(m)));
      }
      out += "\nEXPLANATION " + std::string(mechanism_key(m));
      out += "\nresistance_analysis: " + fold_lines(trim(it->second.resistance_analysis));
      out += "\nresponse_analysis: " + fold_lines(trim(it->second.response_analysis));
    }
  }
  return out;
}

std::string format_target(const RatingVector& ratings, const ExplanationMap& explanations, TargetMode mode) {
  PartialRatings raw;
  for (auto m : kMechanisms) raw[m] = ordinal(ratings[m]);
  return format_target(raw, explanations, mode, {kMechanisms.begin(), kMechanisms.end()});
}

RatingVector ParsedOutput::vector() const {
  auto rv = to_rating_vector(ratings);
  if (!rv) fail(ErrorCode::kInternal, "parsed output does not hold a complete rating vector");
  return *rv;
}

namespace {

// Returns -1 when the value is not recognisable as a level; out-of-range
// integers are returned as-is so they surface as invalid levels.
long long tolerant_level(std::string_view raw) {
  auto v = lower(trim(raw));
  auto strip = [&](std::string_view chars) {
    while (!v.empty() && chars.find(v.front()) != std::string_view::npos) v.erase(v.begin());
  };
  strip(" *`_\"'([");
  if (v.rfind("level", 0) == 0) {
    v.erase(0, 5);
    strip(" :=*");
  }
  if (!v.empty() && std::isdigit(static_cast<unsigned char>(v.front()))) {
    std::size_t n = 0;
    while (n < v.size() && std::isdigit(static_cast<unsigned char>(v[n]))) ++n;
    if (n > 6) return 999999;
    return std::stoll(v.substr(0, n));
  }
  std::size_t n = 0;
  while (n < v.size() && std::isalpha(static_cast<unsigned char>(v[n]))) ++n;
  auto word = v.substr(0, n);
  if (word == "no" || word == "none" || word == "absent") return 0;
  if (word == "weak" || word == "minimal") return 1;
  if (word == "strong") return 2;
  return -1;
}

std::string strip_decoration(std::string_view line) {
  std::string s;
  s.reserve(line.size());
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '*' || line[i] == '`') continue;
    s.push_back(line[i]);
  }
  auto t = trim(s);
  std::size_t k = 0;
  while (k < t.size() && (t[k] == '#' || t[k] == '-' || t[k] == '>' || t[k] == ' ' || t[k] == '\t')) ++k;
  return t.substr(k);
}

// Splits "key: value" / "key = value" / "key - value"; false when no separator.
bool split_key_value(std::string_view line, std::string& key, std::string& value) {
  auto pos = line.find_first_of(":=");
  if (pos == std::string_view::npos) {
    pos = line.find(" - ");
    if (pos == std::string_view::npos) return false;
    key = trim(line.substr(0, pos));
    value = trim(line.substr(pos + 3));
    return true;
  }
  key = trim(line.substr(0, pos));
  value = trim(line.substr(pos + 1));
  return true;
}

std::string normalize_field(std::string_view key) {
  std::string k = lower(trim(key));
  for (auto& c : k) {
    if (c == ' ' || c == '-') c = '_';
  }
  return k;
}

struct ExplanationScan {
  ExplanationMap found;
};

void scan_explanations(const std::vector<std::string_view>& lines, bool tolerant, ExplanationScan& out) {
  std::optional<Mechanism> current;
  for (auto raw : lines) {
    std::string line = tolerant ? strip_decoration(raw) : std::string(raw);
    const std::string head = tolerant ? lower(line) : line;
    if (head.rfind("EXPLANATION ", 0) == 0 || (tolerant && head.rfind("explanation ", 0) == 0)) {
      auto name = trim(std::string_view(line).substr(12));
      if (tolerant) {
        while (!name.empty() && (name.back() == ':')) name.pop_back();
      }
      current = tolerant ? mechanism_from_key(name)
                         : [&]() -> std::optional<Mechanism> {
                             for (auto m : kMechanisms) {
                               if (name == mechanism_key(m)) return m;
                             }
                             return std::nullopt;
                           }();
      continue;
    }
    if (!current) continue;
    std::string key, value;
    if (tolerant) {
      if (!split_key_value(line, key, value)) continue;
      key = normalize_field(key);
    } else {
      auto pos = line.find(": ");
      if (pos == std::string::npos) continue;
      key = line.substr(0, pos);
      value = line.substr(pos + 2);
    }
    if (key == "resistance_analysis" || (tolerant && key == "client_resistance_analysis")) {
      out.found[*current].resistance_analysis = trim(value);
    } else if (key == "response_analysis" || (tolerant && key == "counselor_response_analysis")) {
      out.found[*current].response_analysis = trim(value);
    }
  }
}

bool strict_ratings(const std::vector<std::string_view>& lines, const std::vector<Mechanism>& expected,
                    PartialRatings& out) {
  auto it = std::find(lines.begin(), lines.end(), std::string_view("RATINGS"));
  if (it == lines.end()) return false;
  PartialRatings got;
  for (++it; it != lines.end(); ++it) {
    auto line = *it;
    if (line.empty() || line.rfind("EXPLANATION", 0) == 0) break;
    auto pos = line.find(": ");
    if (pos == std::string_view::npos) return false;
    auto key = line.substr(0, pos);
    auto value = line.substr(pos + 2);
    std::optional<Mechanism> m;
    for (auto cand : expected) {
      if (key == mechanism_key(cand)) m = cand;
    }
    if (!m || got.count(*m)) return false;
    if (value.empty() || value.size() > 6 ||
        !std::all_of(value.begin(), value.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
      return false;
    }
    got[*m] = std::stoll(std::string(value));
  }
  if (got.size() != expected.size()) return false;
  out = std::move(got);
  return true;
}

}  // namespace

ParsedOutput parse_model_output(std::string_view text, TargetMode mode, const std::vector<Mechanism>& mechanisms) {
  const auto lines = split_lines(text);
  ParsedOutput out;

  bool strict = strict_ratings(lines, mechanisms, out.ratings);
  if (!strict) {
    out.used_fallback = true;
    out.ratings.clear();
    for (auto raw : lines) {
      std::string key, value;
      if (!split_key_value(strip_decoration(raw), key, value)) continue;
      auto m = mechanism_from_key(key);
      if (!m || std::find(mechanisms.begin(), mechanisms.end(), *m) == mechanisms.end()) continue;
      if (out.ratings.count(*m)) continue;
      auto level = tolerant_level(value);
      if (level == -1) continue;
      out.ratings[*m] = level;
    }
  }

  std::vector<std::string> problems;
  for (auto m : mechanisms) {
    auto it = out.ratings.find(m);
    if (it == out.ratings.end()) {
      problems.push_back("missing " + std::string(mechanism_key(m)));
    } else if (it->second < 0 || it->second > 2) {
      problems.push_back("invalid level for " + std::string(mechanism_key(m)) + ": " + std::to_string(it->second));
    }
  }
  if (!problems.empty()) {
    std::string msg = "unparseable model output: ";
    for (std::size_t i = 0; i < problems.size(); ++i) msg += (i ? "; " : "") + problems[i];
    throw ParseFailure(msg, std::string(text), std::move(problems));
  }

  if (mode == TargetMode::kWithExplanations) {
    ExplanationScan scan;
    scan_explanations(lines, false, scan);
    bool complete = std::all_of(mechanisms.begin(), mechanisms.end(), [&](Mechanism m) {
      auto it = scan.found.find(m);
      return it != scan.found.end() && it->second.complete();
    });
    if (!complete) {
      ExplanationScan loose;
      scan_explanations(lines, true, loose);
      for (auto& [m, e] : loose.found) {
        auto& dst = scan.found[m];
        if (dst.resistance_analysis.empty()) dst.resistance_analysis = e.resistance_analysis;
        if (dst.response_analysis.empty()) dst.response_analysis = e.response_analysis;
      }
      out.used_fallback = true;
    }
    for (auto m : mechanisms) {
      auto& e = scan.found[m];
      if (!e.complete()) out.missing_explanations.push_back(m);
      out.explanations[m] = e;
    }
  }
  return out;
}

}  // namespace counselkit::scoring
