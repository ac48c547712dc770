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

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "framework.hpp"
#include "prompt.hpp"

namespace counselkit::dataset {

struct LabeledId {
  std::string episode_id;
  RatingVector gold;
};

// Joint 4-tuple key, or one mechanism's level when stratifying per dimension.
struct StratumKeyFn {
  std::optional<Mechanism> single;
  std::array<int, 4> operator()(const RatingVector& rv) const;
};

struct FoldAssignment {
  int k = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> order;       // input order
  std::map<std::string, int> fold_of;   // episode_id -> 0..k-1

  std::vector<std::string> members(int fold) const;       // input order
  std::vector<std::string> complement(int fold) const;    // training ids for `fold`
};

// Strata are joint label tuples; strata smaller than k are pooled into one
// rarity bucket. Each stratum is shuffled with the seed and dealt round-robin,
// continuing the dealing position across strata so fold sizes differ by <= 1.
FoldAssignment stratified_kfold(std::span<const LabeledId> items, int k, std::uint64_t seed,
                                StratumKeyFn key = {});

Json folds_to_json(const FoldAssignment& f);
FoldAssignment folds_from_json(const Json& j);

struct SamplingPlan {
  std::map<std::string, int> replication;  // every input id, count >= 1
  std::vector<std::string> sequence;       // emitted multiset, seeded shuffle
  std::size_t strata = 0;
  std::size_t target_per_stratum = 0;
  std::string strategy = "joint-max";
};

// joint-max: every stratum (rarity bucket counted as one) is topped up by
// sampling with replacement until it matches the largest stratum.
SamplingPlan oversample(std::span<const LabeledId> training, std::uint64_t seed, int rarity_threshold = 5,
                        StratumKeyFn key = {});

Json sampling_plan_to_json(const SamplingPlan& p);

struct GoldExample {
  Episode episode;
  RatingVector ratings;
  ExplanationMap explanations;
};

struct TrainingExample {
  std::string instruction;
  std::string target;
  scoring::TargetMode mode;
  std::string episode_id;
};

Json training_example_to_json(const TrainingExample& e);

struct EmitOptions {
  scoring::TargetMode mode = scoring::TargetMode::kWithExplanations;
  scoring::PromptOptions prompt;  // mode and mechanisms are overwritten from this struct
  std::optional<Mechanism> single_mechanism;  // per-dimension datasets
};

// One example per occurrence of an id in `sequence`. Throws naming the first
// episode that lacks an explanation in augmented mode.
std::vector<TrainingExample> emit_training_examples(const std::map<std::string, const GoldExample*>& by_id,
                                                    std::span<const std::string> sequence,
                                                    const EmitOptions& options);

struct ManifestConfig {
  int k = 5;
  int epochs = 3;
  double learning_rate = 1e-5;
  std::string early_stopping_monitor = "validation_loss";
  double temperature = 0.0;
  double top_p = 1.0;
  std::uint64_t seed = 0;
  scoring::TargetMode mode = scoring::TargetMode::kWithExplanations;
  std::string base_model = "Llama-3.1-8B-Instruct";
  std::string stratification = "joint";
  std::string oversampling = "joint-max";
  int max_context_turns = 20;

  static ManifestConfig main_run(std::uint64_t seed);
  static ManifestConfig ablation_run(std::uint64_t seed);  // labels only, lr 5e-6
};

// SHA-256 over the canonical serialisation of episodes and gold, sorted by id.
std::string dataset_fingerprint(std::span<const GoldExample> examples);

Json manifest_to_json(const ManifestConfig& c, const std::string& fingerprint, const Json& files);

}  // namespace counselkit::dataset
