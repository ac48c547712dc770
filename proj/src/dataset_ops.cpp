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

#include "dataset_ops.hpp"

#include <algorithm>
#include <random>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "error.hpp"

namespace counselkit::dataset {

namespace {

using Key = std::array<int, 4>;
inline constexpr Key kRarityBucket = {-1, -1, -1, -1};

// Ordered strata: regular strata by key, the rarity bucket last.
std::vector<std::pair<Key, std::vector<std::size_t>>> build_strata(std::span<const LabeledId> items,
                                                                   const StratumKeyFn& key_fn,
                                                                   std::size_t rarity_threshold) {
  std::map<Key, std::vector<std::size_t>> by_key;
  for (std::size_t i = 0; i < items.size(); ++i) by_key[key_fn(items[i].gold)].push_back(i);
  std::vector<std::pair<Key, std::vector<std::size_t>>> strata;
  std::vector<std::size_t> bucket;
  for (auto& [key, members] : by_key) {
    if (members.size() < rarity_threshold) {
      bucket.insert(bucket.end(), members.begin(), members.end());
    } else {
      strata.emplace_back(key, std::move(members));
    }
  }
  if (!bucket.empty()) {
    std::sort(bucket.begin(), bucket.end());
    strata.emplace_back(kRarityBucket, std::move(bucket));
  }
  return strata;
}

}  // namespace

std::array<int, 4> StratumKeyFn::operator()(const RatingVector& rv) const {
  if (single) return {ordinal(rv[*single]), 0, 0, 0};
  return {ordinal(rv[Mechanism::kRespectForAutonomy]), ordinal(rv[Mechanism::kStanceAlignment]),
          ordinal(rv[Mechanism::kEmotionalResonance]), ordinal(rv[Mechanism::kConversationalOrientation])};
}

std::vector<std::string> FoldAssignment::members(int fold) const {
  std::vector<std::string> out;
  for (const auto& id : order) {
    if (fold_of.at(id) == fold) out.push_back(id);
  }
  return out;
}

std::vector<std::string> FoldAssignment::complement(int fold) const {
  std::vector<std::string> out;
  for (const auto& id : order) {
    if (fold_of.at(id) != fold) out.push_back(id);
  }
  return out;
}

FoldAssignment stratified_kfold(std::span<const LabeledId> items, int k, std::uint64_t seed, StratumKeyFn key) {
  if (k < 2) fail(ErrorCode::kInvalidArgument, "k must be at least 2 (got " + std::to_string(k) + ")");
  if (items.size() < static_cast<std::size_t>(k)) {
    fail(ErrorCode::kInvalidArgument, "k = " + std::to_string(k) + " exceeds dataset size " +
                                          std::to_string(items.size()));
  }
  FoldAssignment out;
  out.k = k;
  out.seed = seed;
  for (const auto& it : items) {
    if (out.fold_of.count(it.episode_id)) fail(ErrorCode::kInvalidArgument, "duplicate episode id '" + it.episode_id + "'");
    out.fold_of[it.episode_id] = -1;
    out.order.push_back(it.episode_id);
  }
  std::mt19937_64 rng(seed);
  std::size_t deal = 0;
  for (auto& [stratum_key, members] : build_strata(items, key, static_cast<std::size_t>(k))) {
    std::shuffle(members.begin(), members.end(), rng);
    for (auto idx : members) out.fold_of[items[idx].episode_id] = static_cast<int>(deal++ % static_cast<std::size_t>(k));
  }
  return out;
}

Json folds_to_json(const FoldAssignment& f) {
  Json assignments = Json::array();
  for (const auto& id : f.order) assignments.push_back({{"episode_id", id}, {"fold", f.fold_of.at(id)}});
  return {{"k", f.k}, {"seed", f.seed}, {"stratification", "joint"}, {"assignments", std::move(assignments)}};
}

FoldAssignment folds_from_json(const Json& j) {
  FoldAssignment f;
  f.k = j.at("k").get<int>();
  f.seed = j.value("seed", std::uint64_t{0});
  for (const auto& a : j.at("assignments")) {
    auto id = a.at("episode_id").get<std::string>();
    int fold = a.at("fold").get<int>();
    if (fold < 0 || fold >= f.k) fail(ErrorCode::kParse, "fold index out of range for '" + id + "'");
    if (!f.fold_of.emplace(id, fold).second) fail(ErrorCode::kParse, "duplicate fold entry for '" + id + "'");
    f.order.push_back(std::move(id));
  }
  return f;
}

SamplingPlan oversample(std::span<const LabeledId> training, std::uint64_t seed, int rarity_threshold,
                        StratumKeyFn key) {
  if (training.empty()) fail(ErrorCode::kInvalidArgument, "cannot oversample an empty training set");
  auto strata = build_strata(training, key, static_cast<std::size_t>(std::max(rarity_threshold, 1)));
  std::size_t target = 0;
  for (const auto& [k, members] : strata) target = std::max(target, members.size());

  SamplingPlan plan;
  plan.strata = strata.size();
  plan.target_per_stratum = target;
  std::mt19937_64 rng(seed);
  for (const auto& [k, members] : strata) {
    for (auto idx : members) {
      plan.sequence.push_back(training[idx].episode_id);
      plan.replication[training[idx].episode_id] += 1;
    }
    std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
    for (std::size_t extra = members.size(); extra < target; ++extra) {
      const auto& id = training[members[pick(rng)]].episode_id;
      plan.sequence.push_back(id);
      plan.replication[id] += 1;
    }
  }
  std::shuffle(plan.sequence.begin(), plan.sequence.end(), rng);
  return plan;
}

Json sampling_plan_to_json(const SamplingPlan& p) {
  return {{"strategy", p.strategy},
          {"strata", p.strata},
          {"target_per_stratum", p.target_per_stratum},
          {"size", p.sequence.size()},
          {"replication", p.replication},
          {"sequence", p.sequence}};
}

Json training_example_to_json(const TrainingExample& e) {
  return {{"instruction", e.instruction},
          {"target", e.target},
          {"mode", scoring::target_mode_name(e.mode)},
          {"episode_id", e.episode_id}};
}

std::vector<TrainingExample> emit_training_examples(const std::map<std::string, const GoldExample*>& by_id,
                                                    std::span<const std::string> sequence,
                                                    const EmitOptions& options) {
  auto prompt = options.prompt;
  prompt.target = options.mode;
  prompt.mechanisms = options.single_mechanism ? std::vector<Mechanism>{*options.single_mechanism}
                                               : std::vector<Mechanism>(kMechanisms.begin(), kMechanisms.end());
  // Instructions and targets are built once per distinct episode.
  std::map<std::string, std::pair<std::string, std::string>> cache;
  std::vector<TrainingExample> out;
  out.reserve(sequence.size());
  for (const auto& id : sequence) {
    auto it = cache.find(id);
    if (it == cache.end()) {
      auto g = by_id.find(id);
      if (g == by_id.end()) fail(ErrorCode::kNotFound, "no gold example for episode '" + id + "'");
      const auto& ex = *g->second;
      PartialRatings raw;
      for (auto m : prompt.mechanisms) raw[m] = ordinal(ex.ratings[m]);
      std::string target;
      try {
        target = scoring::format_target(raw, ex.explanations, options.mode, prompt.mechanisms);
      } catch (const Error& e) {
        fail(ErrorCode::kInvalidArgument, "episode '" + id + "': " + e.what());
      }
      it = cache.emplace(id, std::make_pair(scoring::build_instruction(ex.episode, prompt), std::move(target))).first;
    }
    out.push_back({it->second.first, it->second.second, options.mode, id});
  }
  return out;
}

ManifestConfig ManifestConfig::main_run(std::uint64_t seed) {
  ManifestConfig c;
  c.seed = seed;
  return c;
}

ManifestConfig ManifestConfig::ablation_run(std::uint64_t seed) {
  ManifestConfig c;
  c.seed = seed;
  c.learning_rate = 5e-6;
  c.mode = scoring::TargetMode::kLabelsOnly;
  return c;
}

std::string dataset_fingerprint(std::span<const GoldExample> examples) {
  std::vector<const GoldExample*> sorted;
  for (const auto& e : examples) sorted.push_back(&e);
  std::sort(sorted.begin(), sorted.end(),
            [](auto* a, auto* b) { return a->episode.episode_id() < b->episode.episode_id(); });
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    fail(ErrorCode::kInternal, "SHA-256 unavailable");
  }
  for (const auto* e : sorted) {
    auto line = Json{{"episode", episode_to_json(e->episode)},
                     {"ratings", ratings_to_json(e->ratings)},
                     {"explanations", explanations_to_json(e->explanations)}}
                    .dump() +
                "\n";
    EVP_DigestUpdate(ctx, line.data(), line.size());
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex = "sha256:";
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

Json manifest_to_json(const ManifestConfig& c, const std::string& fingerprint, const Json& files) {
  return {{"format_version", 1},
          {"base_model", c.base_model},
          {"k", c.k},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"early_stopping", {{"monitor", c.early_stopping_monitor}, {"mode", "min"}}},
          {"checkpoint_selection", "best_validation_loss"},
          {"decoding", {{"temperature", c.temperature}, {"top_p", c.top_p}}},
          {"seed", c.seed},
          {"mode", scoring::target_mode_name(c.mode)},
          {"stratification", c.stratification},
          {"oversampling", c.oversampling},
          {"max_context_turns", c.max_context_turns},
          {"prompt_template_version", scoring::kPromptTemplateVersion},
          {"dataset_fingerprint", fingerprint},
          {"files", files}};
}

}  // namespace counselkit::dataset
