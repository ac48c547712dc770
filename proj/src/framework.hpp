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

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace counselkit {

using Json = nlohmann::json;

// Iteration order is fixed: autonomy, stance, emotion, orientation.
enum class Mechanism : std::uint8_t {
  kRespectForAutonomy = 0,
  kStanceAlignment = 1,
  kEmotionalResonance = 2,
  kConversationalOrientation = 3,
};

inline constexpr std::array<Mechanism, 4> kMechanisms = {
    Mechanism::kRespectForAutonomy, Mechanism::kStanceAlignment,
    Mechanism::kEmotionalResonance, Mechanism::kConversationalOrientation};

inline constexpr std::size_t index_of(Mechanism m) { return static_cast<std::size_t>(m); }

std::string_view mechanism_key(Mechanism m);           // "respect_for_autonomy"
std::string_view mechanism_display_name(Mechanism m);  // "Respect for Autonomy"

// Case-insensitive; spaces and hyphens count as underscores; accepts display
// names and the "conversational_direction" alias.
std::optional<Mechanism> mechanism_from_key(std::string_view key);

enum class Level : std::uint8_t { kNo = 0, kWeak = 1, kStrong = 2 };

inline constexpr std::array<Level, 3> kLevels = {Level::kNo, Level::kWeak, Level::kStrong};

inline constexpr int ordinal(Level l) { return static_cast<int>(l); }

// Throws Error(kInvalidArgument) naming the value when n is not 0, 1 or 2.
Level level_from_ordinal(long long n);

std::string_view level_name(Level l);          // "no" / "weak" / "strong"
std::string_view level_display_name(Level l);  // "No Expression" ...

struct RubricEntry {
  Mechanism mechanism;
  Level level;
  std::string definition;
  std::string exemplar;  // empty where no exemplar utterance exists
};

class Rubric {
 public:
  // The resource compiled into the library from data/rubric.json.
  static const Rubric& builtin();
  static Rubric from_json(const Json& doc);
  static Rubric load(const std::filesystem::path& path);

  const RubricEntry& lookup(Mechanism m, Level l) const;
  std::span<const RubricEntry> entries() const { return entries_; }
  Json to_json() const;

 private:
  std::vector<RubricEntry> entries_;  // mechanism-major, 12 entries
};

const RubricEntry& rubric_lookup(Mechanism m, Level l);

enum class Speaker : std::uint8_t { kClient, kCounselor };

std::string_view speaker_name(Speaker s);
Speaker speaker_from_name(std::string_view name);

struct Turn {
  Speaker speaker = Speaker::kClient;
  std::string text;
  int index = 0;

  bool operator==(const Turn&) const = default;
};

Json turn_to_json(const Turn& t);
Turn turn_from_json(const Json& j, int default_index);

// Immutable once built; create() enforces the pairing invariants.
class Episode {
 public:
  static Episode create(std::string episode_id, std::vector<Turn> context, Turn response,
                        std::string source_transcript_id);

  static std::string derive_id(std::string_view transcript_id, int response_index);

  const std::string& episode_id() const { return episode_id_; }
  const std::vector<Turn>& context() const { return context_; }
  const Turn& response() const { return response_; }
  const std::string& source_transcript_id() const { return source_transcript_id_; }
  const Turn& resistance_turn() const { return context_.back(); }

  bool operator==(const Episode&) const = default;

 private:
  Episode() = default;
  std::string episode_id_;
  std::vector<Turn> context_;
  Turn response_;
  std::string source_transcript_id_;
};

Json episode_to_json(const Episode& e);
Episode episode_from_json(const Json& j);

class RatingVector {
 public:
  RatingVector() = default;  // all NoExpression
  explicit RatingVector(std::array<Level, 4> levels) : levels_(levels) {}
  static RatingVector uniform(Level l) { return RatingVector({l, l, l, l}); }

  Level operator[](Mechanism m) const { return levels_[index_of(m)]; }
  void set(Mechanism m, Level l) { levels_[index_of(m)] = l; }
  const std::array<Level, 4>& levels() const { return levels_; }

  bool operator==(const RatingVector&) const = default;
  auto operator<=>(const RatingVector&) const = default;

 private:
  std::array<Level, 4> levels_{};
};

// Raw, possibly incomplete ratings as they arrive from files or model output.
using PartialRatings = std::map<Mechanism, long long>;

struct RatingViolation {
  enum class Kind { kMissingKey, kInvalidLevel, kUnknownKey };
  Kind kind;
  std::string key;
  std::string detail;
};

struct RatingValidation {
  std::vector<RatingViolation> violations;
  bool ok() const { return violations.empty(); }
  std::string describe() const;
};

RatingValidation validate_rating_vector(const PartialRatings& raw);

// Returns the vector iff validate_rating_vector(raw).ok().
std::optional<RatingVector> to_rating_vector(const PartialRatings& raw);

Json ratings_to_json(const RatingVector& rv);
// Throws Error(kParse) with the full violation list.
RatingVector ratings_from_json(const Json& j);
// Collects raw entries without throwing; unknown keys become violations.
RatingValidation partial_ratings_from_json(const Json& j, PartialRatings& out);

struct Explanation {
  std::string resistance_analysis;
  std::string response_analysis;

  bool empty() const { return resistance_analysis.empty() && response_analysis.empty(); }
  bool complete() const { return !resistance_analysis.empty() && !response_analysis.empty(); }
  bool operator==(const Explanation&) const = default;
};

using ExplanationMap = std::map<Mechanism, Explanation>;

Json explanations_to_json(const ExplanationMap& m);
ExplanationMap explanations_from_json(const Json& j);

std::string trim(std::string_view s);

}  // namespace counselkit
