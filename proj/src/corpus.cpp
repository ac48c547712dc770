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

#include "corpus.hpp"

#include <set>

#include "error.hpp"
#include "io.hpp"
#include "table.hpp"

namespace counselkit::corpus {

Transcript transcript_from_json(const Json& j) {
  if (!j.is_object()) fail(ErrorCode::kParse, "record is not a JSON object");
  if (!j.contains("transcript_id") || !j.at("transcript_id").is_string()) {
    fail(ErrorCode::kParse, "missing string field 'transcript_id'");
  }
  Transcript t;
  t.transcript_id = j.at("transcript_id").get<std::string>();
  if (t.transcript_id.empty()) fail(ErrorCode::kParse, "empty transcript_id");
  if (!j.contains("turns") || !j.at("turns").is_array() || j.at("turns").empty()) {
    fail(ErrorCode::kParse, "'turns' must be a non-empty array");
  }
  int i = 0;
  for (const auto& turn : j.at("turns")) {
    auto parsed = turn_from_json(turn, i);
    if (parsed.index != i) {
      fail(ErrorCode::kParse, "turn indices must be contiguous from 0 (found " +
                                  std::to_string(parsed.index) + " at position " + std::to_string(i) + ")");
    }
    t.turns.push_back(std::move(parsed));
    ++i;
  }
  if (j.contains("metadata")) {
    if (!j.at("metadata").is_object()) fail(ErrorCode::kParse, "'metadata' must be an object");
    t.metadata = j.at("metadata");
  }
  return t;
}

Json transcript_to_json(const Transcript& t, const std::vector<ResistanceMark>& marks) {
  std::set<int> flagged;
  for (const auto& m : marks) {
    if (m.transcript_id == t.transcript_id) flagged.insert(m.turn_index);
  }
  Json turns = Json::array();
  for (const auto& turn : t.turns) {
    Json jt = {{"speaker", speaker_name(turn.speaker)}, {"text", turn.text}};
    if (flagged.count(turn.index)) jt["resistance"] = true;
    turns.push_back(std::move(jt));
  }
  return {{"transcript_id", t.transcript_id}, {"turns", std::move(turns)}, {"metadata", t.metadata}};
}

IngestResult ingest_transcripts(std::string_view jsonl_text) {
  IngestResult out;
  auto parsed = io::parse_jsonl(jsonl_text);
  for (const auto& s : parsed.skipped) out.report.skipped.push_back({s.line_number, s.reason});
  std::set<std::string> seen;
  for (const auto& line : parsed.lines) {
    try {
      auto t = transcript_from_json(line.value);
      if (!seen.insert(t.transcript_id).second) {
        fail(ErrorCode::kParse, "duplicate transcript_id '" + t.transcript_id + "'");
      }
      const auto& turns = line.value.at("turns");
      for (std::size_t k = 0; k < turns.size(); ++k) {
        if (turns[k].value("resistance", false)) {
          if (t.turns[k].speaker != Speaker::kClient) {
            fail(ErrorCode::kParse, "resistance flag on counselor turn " + std::to_string(k));
          }
          out.inline_marks.push_back({t.transcript_id, static_cast<int>(k), "input", std::nullopt});
        }
      }
      out.transcripts.push_back(std::move(t));
    } catch (const Error& e) {
      out.report.skipped.push_back({line.line_number, e.what()});
    } catch (const Json::exception& e) {
      out.report.skipped.push_back({line.line_number, std::string("schema violation: ") + e.what()});
    }
  }
  std::sort(out.report.skipped.begin(), out.report.skipped.end(),
            [](const SkippedLine& a, const SkippedLine& b) { return a.line_number < b.line_number; });
  out.report.accepted = out.transcripts.size();
  if (out.transcripts.empty()) out.report.warnings.push_back("no transcripts ingested");
  return out;
}

ResistanceMark mark_from_json(const Json& j) {
  ResistanceMark m;
  m.transcript_id = j.at("transcript_id").get<std::string>();
  m.turn_index = j.at("turn_index").get<int>();
  m.detector = j.value("detector", "manual");
  if (j.contains("confidence") && !j.at("confidence").is_null()) {
    double c = j.at("confidence").get<double>();
    if (c < 0.0 || c > 1.0) fail(ErrorCode::kParse, "mark confidence outside [0,1]");
    m.confidence = c;
  }
  return m;
}

Json mark_to_json(const ResistanceMark& m) {
  Json j = {{"transcript_id", m.transcript_id}, {"turn_index", m.turn_index}, {"detector", m.detector}};
  if (m.confidence) j["confidence"] = *m.confidence;
  return j;
}

std::vector<ResistanceMark> HttpDetectorStub::detect(const Transcript& t) {
  fail(ErrorCode::kBackend, "resistance detector at '" + endpoint_ +
                                "' is not available; supply marks in the input or a marks file (transcript " +
                                t.transcript_id + ")");
}

PairingResult pair_episodes(const Transcript& t, const std::vector<ResistanceMark>& marks,
                            const PairingOptions& options) {
  PairingResult out;
  std::set<int> used;
  const int n = static_cast<int>(t.turns.size());
  for (const auto& mark : marks) {
    auto reject = [&](std::string reason, bool invalid) {
      out.report.unpaired.push_back({mark, std::move(reason), invalid});
    };
    if (mark.transcript_id != t.transcript_id) {
      reject("mark references transcript '" + mark.transcript_id + "'", true);
      continue;
    }
    const int i = mark.turn_index;
    if (i < 0 || i >= n) {
      reject("turn index " + std::to_string(i) + " out of range", true);
      continue;
    }
    if (t.turns[i].speaker != Speaker::kClient) {
      reject("mark references counselor turn " + std::to_string(i), true);
      continue;
    }
    if (!used.insert(i).second) {
      reject("duplicate mark", true);
      continue;
    }
    if (i + 1 >= n) {
      reject(std::string(kReasonNoSubsequentTurn), false);
      continue;
    }
    if (t.turns[i + 1].speaker != Speaker::kCounselor) {
      reject(std::string(kReasonNextTurnIsClient), false);
      continue;
    }
    int first = 0;
    if (options.max_context_turns > 0) first = std::max(0, i + 1 - options.max_context_turns);
    std::vector<Turn> context(t.turns.begin() + first, t.turns.begin() + i + 1);
    out.episodes.push_back(Episode::create("", std::move(context), t.turns[i + 1], t.transcript_id));
  }
  return out;
}

CorpusStats corpus_stats(const std::vector<LabeledEpisode>& episodes) {
  CorpusStats s;
  for (const auto& e : episodes) {
    if (!e.gold) fail(ErrorCode::kInvalidArgument, "episode '" + e.episode_id + "' has no gold ratings");
    for (auto m : kMechanisms) ++s.counts[index_of(m)][static_cast<std::size_t>(ordinal((*e.gold)[m]))];
    ++s.total;
  }
  return s;
}

Json corpus_stats_to_json(const CorpusStats& s) {
  Json rows = Json::object();
  for (auto m : kMechanisms) {
    const auto& c = s.counts[index_of(m)];
    rows[std::string(mechanism_key(m))] = {{"no", c[0]}, {"weak", c[1]}, {"strong", c[2]},
                                            {"total", c[0] + c[1] + c[2]}};
  }
  return {{"total", s.total}, {"mechanisms", std::move(rows)}};
}

std::string render_corpus_stats(const CorpusStats& s) {
  TextTable table({"Dimension", "No", "Weak", "Strong", "Total"});
  table.set_group_breaks({0, 3});
  for (auto m : kMechanisms) {
    const auto& c = s.counts[index_of(m)];
    table.add_row({std::string(mechanism_display_name(m)), std::to_string(c[0]), std::to_string(c[1]),
                   std::to_string(c[2]), std::to_string(c[0] + c[1] + c[2])});
  }
  return table.render();
}

}  // namespace counselkit::corpus
