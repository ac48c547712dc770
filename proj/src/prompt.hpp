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

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "framework.hpp"

namespace counselkit::scoring {

// Bumped whenever prompt or instruction wording changes; recorded in
// manifests and batch reports.
inline constexpr std::string_view kPromptTemplateVersion = "ck-prompt-2";

enum class PromptMode { kZeroShot, kTuned };
enum class TargetMode { kWithExplanations, kLabelsOnly };

std::string_view prompt_mode_name(PromptMode m);
PromptMode prompt_mode_from_name(std::string_view s);
std::string_view target_mode_name(TargetMode m);
TargetMode target_mode_from_name(std::string_view s);

struct ChatMessage {
  std::string role;  // "system" | "user" | "assistant"
  std::string content;
  bool operator==(const ChatMessage&) const = default;
};

struct PromptOptions {
  int max_context_turns = 20;  // most recent turns kept; <= 0 disables truncation
  TargetMode target = TargetMode::kWithExplanations;
  const Rubric* rubric = nullptr;  // builtin when null
  // Subset scored by this prompt; the per-dimension datasets use one mechanism.
  std::vector<Mechanism> mechanisms{kMechanisms.begin(), kMechanisms.end()};
};

struct Prompt {
  std::vector<ChatMessage> messages;
  std::size_t omitted_turns = 0;
  bool truncated() const { return omitted_turns > 0; }
};

Prompt build_prompt(const Episode& episode, PromptMode mode, const PromptOptions& options = {});

// The single user message of Tuned mode; also the `instruction` field of
// emitted training examples.
std::string build_instruction(const Episode& episode, const PromptOptions& options = {});

// Appended after an unparseable reply before the next attempt.
std::string format_correction_message(std::string_view problem, const PromptOptions& options);

// ---- canonical target grammar ----
//
//   RATINGS
//   respect_for_autonomy: 1
//   stance_alignment: 2
//   emotional_resonance: 0
//   conversational_orientation: 1
//   EXPLANATION respect_for_autonomy
//   resistance_analysis: <one line>
//   response_analysis: <one line>
//   ... one EXPLANATION block per mechanism (augmented mode only)
//
// Lines are joined by '\n' with no trailing newline. Line breaks inside
// explanation text are folded to single spaces.

std::string format_target(const PartialRatings& ratings, const ExplanationMap& explanations, TargetMode mode,
                          const std::vector<Mechanism>& mechanisms);
std::string format_target(const RatingVector& ratings, const ExplanationMap& explanations, TargetMode mode);

struct ParsedOutput {
  PartialRatings ratings;  // exactly the expected mechanisms, each 0..2
  ExplanationMap explanations;
  std::vector<Mechanism> missing_explanations;  // augmented mode only; coerced to empty
  bool used_fallback = false;

  // Complete vector; only valid when all four mechanisms were expected.
  RatingVector vector() const;
};

class ParseFailure : public std::runtime_error {
 public:
  ParseFailure(const std::string& what, std::string raw, std::vector<std::string> problems)
      : std::runtime_error(what), raw_(std::move(raw)), problems_(std::move(problems)) {}
  const std::string& raw() const { return raw_; }
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::string raw_;
  std::vector<std::string> problems_;
};

// Strict canonical parse first; if that does not yield every expected
// mechanism, the tolerant pass runs over the whole text:
//   1. markdown decoration (#, *, -, >, backticks, bold markers) is stripped;
//   2. keys match case-insensitively, with spaces/hyphens as underscores and
//      display names or aliases accepted;
//   3. values may be 0/1/2 or the words no|none|absent / weak|minimal /
//      strong, optionally followed by "expression";
//   4. the first occurrence of each mechanism wins.
// Throws ParseFailure listing every missing or invalid key.
ParsedOutput parse_model_output(std::string_view text, TargetMode mode,
                                const std::vector<Mechanism>& mechanisms = {kMechanisms.begin(), kMechanisms.end()});

}  // namespace counselkit::scoring
