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

#include "framework.hpp"

#include <algorithm>
#include <cctype>

#include "error.hpp"
#include "io.hpp"
#include "rubric_data.hpp"

namespace counselkit {

namespace {

std::string normalize_key(std::string_view key) {
  std::string out;
  out.reserve(key.size());
  for (char c : trim(key)) {
    if (c == ' ' || c == '-') c = '_';
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

Level level_from_json(const Json& j) {
  if (j.is_number_integer()) return level_from_ordinal(j.get<long long>());
  if (j.is_string()) {
    auto s = normalize_key(j.get<std::string>());
    if (s == "no" || s == "none" || s == "no_expression") return Level::kNo;
    if (s == "weak" || s == "weak_expression") return Level::kWeak;
    if (s == "strong" || s == "strong_expression") return Level::kStrong;
  }
  fail(ErrorCode::kParse, "invalid level value " + j.dump());
}

}  // namespace

std::string trim(std::string_view s) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  auto b = std::find_if_not(s.begin(), s.end(), is_space);
  auto e = std::find_if_not(s.rbegin(), std::make_reverse_iterator(b), is_space).base();
  return std::string(b, e);
}

std::string_view mechanism_key(Mechanism m) {
  switch (m) {
    case Mechanism::kRespectForAutonomy: return "respect_for_autonomy";
    case Mechanism::kStanceAlignment: return "stance_alignment";
    case Mechanism::kEmotionalResonance: return "emotional_resonance";
    case Mechanism::kConversationalOrientation: return "conversational_orientation";
  }
  return "";
}

std::string_view mechanism_display_name(Mechanism m) {
  switch (m) {
    case Mechanism::kRespectForAutonomy: return "Respect for Autonomy";
    case Mechanism::kStanceAlignment: return "Stance Alignment";
    case Mechanism::kEmotionalResonance: return "Emotional Resonance";
    case Mechanism::kConversationalOrientation: return "Conversational Orientation";
  }
  return "";
}

std::optional<Mechanism> mechanism_from_key(std::string_view key) {
  const auto k = normalize_key(key);
  for (auto m : kMechanisms) {
    if (k == mechanism_key(m)) return m;
  }
  if (k == "conversational_direction" || k == "conversation_orientation") {
    return Mechanism::kConversationalOrientation;
  }
  return std::nullopt;
}

Level level_from_ordinal(long long n) {
  if (n < 0 || n > 2) {
    fail(ErrorCode::kInvalidArgument,
         "level ordinal out of range: " + std::to_string(n) + " (expected 0, 1 or 2)");
  }
  return static_cast<Level>(n);
}

std::string_view level_name(Level l) {
  switch (l) {
    case Level::kNo: return "no";
    case Level::kWeak: return "weak";
    case Level::kStrong: return "strong";
  }
  return "";
}

std::string_view level_display_name(Level l) {
  switch (l) {
    case Level::kNo: return "No Expression";
    case Level::kWeak: return "Weak Expression";
    case Level::kStrong: return "Strong Expression";
  }
  return "";
}

// ---- rubric ----

const Rubric& Rubric::builtin() {
  static const Rubric rubric = from_json(Json::parse(detail::kRubricJson));
  return rubric;
}

Rubric Rubric::from_json(const Json& doc) {
  if (!doc.is_array()) fail(ErrorCode::kParse, "rubric resource must be a JSON array");
  std::array<std::optional<RubricEntry>, 12> slots;
  for (const auto& item : doc) {
    if (!item.is_object()) fail(ErrorCode::kParse, "rubric entry must be an object");
    auto m = mechanism_from_key(item.value("mechanism", ""));
    if (!m) fail(ErrorCode::kParse, "rubric entry has unknown mechanism " + item.value("mechanism", ""));
    Level l = level_from_json(item.at("level"));
    auto definition = item.value("definition", "");
    if (trim(definition).empty()) {
      fail(ErrorCode::kParse, "rubric entry " + std::string(mechanism_key(*m)) + "/" +
                                  std::string(level_name(l)) + " has an empty definition");
    }
    auto& slot = slots[index_of(*m) * 3 + static_cast<std::size_t>(ordinal(l))];
    if (slot) {
      fail(ErrorCode::kParse, "duplicate rubric entry " + std::string(mechanism_key(*m)) + "/" +
                                  std::string(level_name(l)));
    }
    slot = RubricEntry{*m, l, std::move(definition), item.value("exemplar", "")};
  }
  Rubric r;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (!slots[i]) {
      fail(ErrorCode::kParse, "rubric is missing " +
                                  std::string(mechanism_key(kMechanisms[i / 3])) + "/" +
                                  std::string(level_name(kLevels[i % 3])));
    }
    r.entries_.push_back(std::move(*slots[i]));
  }
  return r;
}

Rubric Rubric::load(const std::filesystem::path& path) { return from_json(io::read_json(path)); }

const RubricEntry& Rubric::lookup(Mechanism m, Level l) const {
  return entries_[index_of(m) * 3 + static_cast<std::size_t>(ordinal(l))];
}

Json Rubric::to_json() const {
  Json out = Json::array();
  for (const auto& e : entries_) {
    out.push_back({{"mechanism", mechanism_key(e.mechanism)},
                   {"level", level_name(e.level)},
                   {"definition", e.definition},
                   {"exemplar", e.exemplar}});
  }
  return out;
}

const RubricEntry& rubric_lookup(Mechanism m, Level l) { return Rubric::builtin().lookup(m, l); }

// ---- turns and episodes ----

std::string_view speaker_name(Speaker s) { return s == Speaker::kClient ? "client" : "counselor"; }

Speaker speaker_from_name(std::string_view name) {
  auto k = normalize_key(name);
  if (k == "client") return Speaker::kClient;
  if (k == "counselor" || k == "counsellor" || k == "therapist") return Speaker::kCounselor;
  fail(ErrorCode::kParse, "unknown speaker '" + std::string(name) + "'");
}

Json turn_to_json(const Turn& t) {
  return {{"speaker", speaker_name(t.speaker)}, {"text", t.text}, {"index", t.index}};
}

Turn turn_from_json(const Json& j, int default_index) {
  if (!j.is_object()) fail(ErrorCode::kParse, "turn must be an object");
  Turn t;
  t.speaker = speaker_from_name(j.at("speaker").get<std::string>());
  t.text = j.at("text").get<std::string>();
  t.index = j.contains("index") ? j.at("index").get<int>() : default_index;
  if (trim(t.text).empty()) {
    fail(ErrorCode::kParse, "turn " + std::to_string(t.index) + " has empty text");
  }
  return t;
}

Episode Episode::create(std::string episode_id, std::vector<Turn> context, Turn response,
                        std::string source_transcript_id) {
  if (context.empty()) fail(ErrorCode::kInvalidArgument, "episode context must have at least one turn");
  for (std::size_t i = 0; i < context.size(); ++i) {
    if (trim(context[i].text).empty()) {
      fail(ErrorCode::kInvalidArgument, "context turn " + std::to_string(context[i].index) + " is empty");
    }
    if (i > 0 && context[i].index <= context[i - 1].index) {
      fail(ErrorCode::kInvalidArgument, "context turn indices must be strictly increasing");
    }
  }
  if (context.back().speaker != Speaker::kClient) {
    fail(ErrorCode::kInvalidArgument, "last context turn must be spoken by the client");
  }
  if (response.speaker != Speaker::kCounselor) {
    fail(ErrorCode::kInvalidArgument, "episode response must be spoken by the counselor");
  }
  if (trim(response.text).empty()) fail(ErrorCode::kInvalidArgument, "episode response is empty");
  if (response.index != context.back().index + 1) {
    fail(ErrorCode::kInvalidArgument, "episode response must immediately follow the resistance turn");
  }
  if (episode_id.empty()) episode_id = derive_id(source_transcript_id, response.index);
  Episode e;
  e.episode_id_ = std::move(episode_id);
  e.context_ = std::move(context);
  e.response_ = std::move(response);
  e.source_transcript_id_ = std::move(source_transcript_id);
  return e;
}

std::string Episode::derive_id(std::string_view transcript_id, int response_index) {
  return std::string(transcript_id) + "#" + std::to_string(response_index);
}

Json episode_to_json(const Episode& e) {
  Json ctx = Json::array();
  for (const auto& t : e.context()) ctx.push_back(turn_to_json(t));
  return {{"episode_id", e.episode_id()},
          {"context", std::move(ctx)},
          {"response", turn_to_json(e.response())},
          {"source_transcript_id", e.source_transcript_id()}};
}

Episode episode_from_json(const Json& j) {
  if (!j.is_object()) fail(ErrorCode::kParse, "episode must be an object");
  std::vector<Turn> ctx;
  int i = 0;
  for (const auto& t : j.at("context")) ctx.push_back(turn_from_json(t, i++));
  auto response = turn_from_json(j.at("response"), ctx.empty() ? 0 : ctx.back().index + 1);
  try {
    return Episode::create(j.value("episode_id", ""), std::move(ctx), std::move(response),
                           j.value("source_transcript_id", ""));
  } catch (const Error& e) {
    fail(ErrorCode::kParse, std::string("invalid episode ") + j.value("episode_id", "") + ": " + e.what());
  }
}

// ---- ratings ----

std::string RatingValidation::describe() const {
  std::string out;
  for (const auto& v : violations) {
    if (!out.empty()) out += "; ";
    switch (v.kind) {
      case RatingViolation::Kind::kMissingKey: out += "missing " + v.key; break;
      case RatingViolation::Kind::kInvalidLevel: out += "invalid level for " + v.key + ": " + v.detail; break;
      case RatingViolation::Kind::kUnknownKey: out += "unknown key " + v.key; break;
    }
  }
  return out;
}

RatingValidation validate_rating_vector(const PartialRatings& raw) {
  RatingValidation result;
  for (auto m : kMechanisms) {
    auto it = raw.find(m);
    if (it == raw.end()) {
      result.violations.push_back({RatingViolation::Kind::kMissingKey, std::string(mechanism_key(m)), ""});
    } else if (it->second < 0 || it->second > 2) {
      result.violations.push_back({RatingViolation::Kind::kInvalidLevel, std::string(mechanism_key(m)),
                                   std::to_string(it->second)});
    }
  }
  return result;
}

std::optional<RatingVector> to_rating_vector(const PartialRatings& raw) {
  if (!validate_rating_vector(raw).ok()) return std::nullopt;
  RatingVector rv;
  for (auto m : kMechanisms) rv.set(m, static_cast<Level>(raw.at(m)));
  return rv;
}

Json ratings_to_json(const RatingVector& rv) {
  Json out = Json::object();
  for (auto m : kMechanisms) out[std::string(mechanism_key(m))] = ordinal(rv[m]);
  return out;
}

RatingValidation partial_ratings_from_json(const Json& j, PartialRatings& out) {
  RatingValidation unknown;
  if (!j.is_object()) {
    unknown.violations.push_back({RatingViolation::Kind::kUnknownKey, "<ratings>", "not an object"});
    return unknown;
  }
  for (const auto& [key, value] : j.items()) {
    auto m = mechanism_from_key(key);
    if (!m) {
      unknown.violations.push_back({RatingViolation::Kind::kUnknownKey, key, ""});
      continue;
    }
    if (value.is_number_integer()) {
      out[*m] = value.get<long long>();
    } else {
      try {
        out[*m] = ordinal(level_from_json(value));
      } catch (const Error&) {
        out[*m] = -1;  // reported as an invalid level below
      }
    }
  }
  auto result = validate_rating_vector(out);
  result.violations.insert(result.violations.end(), unknown.violations.begin(), unknown.violations.end());
  return result;
}

RatingVector ratings_from_json(const Json& j) {
  PartialRatings raw;
  auto v = partial_ratings_from_json(j, raw);
  if (!v.ok()) fail(ErrorCode::kParse, "invalid ratings: " + v.describe());
  return *to_rating_vector(raw);
}

Json explanations_to_json(const ExplanationMap& m) {
  Json out = Json::object();
  for (const auto& [mech, e] : m) {
    out[std::string(mechanism_key(mech))] = {{"resistance_analysis", e.resistance_analysis},
                                             {"response_analysis", e.response_analysis}};
  }
  return out;
}

ExplanationMap explanations_from_json(const Json& j) {
  ExplanationMap out;
  if (j.is_null()) return out;
  if (!j.is_object()) fail(ErrorCode::kParse, "explanations must be an object");
  for (const auto& [key, value] : j.items()) {
    auto m = mechanism_from_key(key);
    if (!m) fail(ErrorCode::kParse, "unknown mechanism in explanations: " + key);
    out[*m] = Explanation{value.value("resistance_analysis", ""), value.value("response_analysis", "")};
  }
  return out;
}

}  // namespace counselkit
