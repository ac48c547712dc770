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

#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "framework.hpp"

namespace counselkit::corpus {

struct Transcript {
  std::string transcript_id;
  std::vector<Turn> turns;
  Json metadata = Json::object();
};

struct ResistanceMark {
  std::string transcript_id;
  int turn_index = 0;
  std::string detector = "manual";
  std::optional<double> confidence;
};

struct SkippedLine {
  std::size_t line_number;
  std::string reason;
};

struct IngestReport {
  std::vector<SkippedLine> skipped;
  std::vector<std::string> warnings;
  std::size_t accepted = 0;
};

struct IngestResult {
  std::vector<Transcript> transcripts;
  // Marks taken from `"resistance": true` flags on client turns.
  std::vector<ResistanceMark> inline_marks;
  IngestReport report;
};

// Per-line schema violations are recorded, never fatal.
IngestResult ingest_transcripts(std::string_view jsonl_text);
Transcript transcript_from_json(const Json& j);
Json transcript_to_json(const Transcript& t, const std::vector<ResistanceMark>& marks = {});

ResistanceMark mark_from_json(const Json& j);
Json mark_to_json(const ResistanceMark& m);

// Pluggable source of resistance marks. Detection itself is external.
class ResistanceDetector {
 public:
  virtual ~ResistanceDetector() = default;
  virtual std::vector<ResistanceMark> detect(const Transcript& t) = 0;
};

// Placeholder for a remote detector service; detect() always throws.
class HttpDetectorStub final : public ResistanceDetector {
 public:
  explicit HttpDetectorStub(std::string endpoint) : endpoint_(std::move(endpoint)) {}
  std::vector<ResistanceMark> detect(const Transcript& t) override;

 private:
  std::string endpoint_;
};

struct PairingOptions {
  // 0 keeps the full history up to the resistance turn.
  int max_context_turns = 0;
};

struct UnpairedMark {
  ResistanceMark mark;
  std::string reason;
  bool validation_error = false;  // mark itself is malformed, e.g. points at a counselor turn
};

struct PairingReport {
  // Every mark that did not yield an episode, so |episodes| + |unpaired| = |marks|.
  std::vector<UnpairedMark> unpaired;
};

struct PairingResult {
  std::vector<Episode> episodes;
  PairingReport report;
};

inline constexpr std::string_view kReasonNoSubsequentTurn = "no subsequent turn";
inline constexpr std::string_view kReasonNextTurnIsClient = "next turn is client";

PairingResult pair_episodes(const Transcript& t, const std::vector<ResistanceMark>& marks,
                            const PairingOptions& options = {});

struct CorpusStats {
  std::array<std::array<std::size_t, 3>, 4> counts{};  // [mechanism][level]
  std::size_t total = 0;
};

struct LabeledEpisode {
  std::string episode_id;
  std::optional<RatingVector> gold;
};

// Throws naming the first episode without a gold vector.
CorpusStats corpus_stats(const std::vector<LabeledEpisode>& episodes);
Json corpus_stats_to_json(const CorpusStats& s);
// Table 1 layout: Dimension | No | Weak | Strong | Total.
std::string render_corpus_stats(const CorpusStats& s);

}  // namespace counselkit::corpus
