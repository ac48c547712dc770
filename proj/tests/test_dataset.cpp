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

#include <doctest.h>

#include <random>
#include <set>

#include "dataset_ops.hpp"
#include "error.hpp"
#include "io.hpp"
#include "prompt.hpp"
#include "synthetic.hpp"
#include "test_util.hpp"

using namespace counselkit;
using namespace counselkit::dataset;

namespace {

std::vector<LabeledId> random_items(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<LabeledId> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({"e" + std::to_string(i), testutil::random_ratings(rng)});
  return out;
}

std::vector<LabeledId> synthetic_items(std::size_t n, std::uint64_t seed) {
  synthetic::CorpusSpec spec;
  spec.episodes = n;
  spec.seed = seed;
  auto c = synthetic::synth_corpus(spec);
  std::vector<LabeledId> out;
  for (const auto& g : c.gold) out.push_back({g.episode.episode_id(), g.ratings});
  return out;
}

}  // namespace

TEST_CASE("single-class corpus splits evenly") {
  std::vector<LabeledId> items;
  for (int i = 0; i < 100; ++i) items.push_back({"e" + std::to_string(i), RatingVector::uniform(Level::kWeak)});
  auto f = stratified_kfold(items, 5, 1);
  for (int k = 0; k < 5; ++k) CHECK(f.members(k).size() == 20);
}

TEST_CASE("stratified folds stay proportional per stratum") {
  auto items = synthetic_items(500, 3);
  const int k = 5;
  auto f = stratified_kfold(items, k, 17);
  REQUIRE(f.fold_of.size() == items.size());

  // Counting oracle straight from the emitted assignment.
  StratumKeyFn key;
  std::map<std::array<int, 4>, std::vector<std::string>> strata;
  for (const auto& it : items) strata[key(it.gold)].push_back(it.episode_id);
  std::vector<std::string> rare;
  for (const auto& [kk, ids] : strata) {
    if (ids.size() < static_cast<std::size_t>(k)) rare.insert(rare.end(), ids.begin(), ids.end());
  }
  auto check_group = [&](const std::vector<std::string>& ids) {
    std::array<int, 5> per_fold{};
    for (const auto& id : ids) ++per_fold[static_cast<std::size_t>(f.fold_of.at(id))];
    const double expect = static_cast<double>(ids.size()) / k;
    for (int c : per_fold) CHECK(std::abs(c - expect) < 1.0);
  };
  for (const auto& [kk, ids] : strata) {
    if (ids.size() >= static_cast<std::size_t>(k)) check_group(ids);
  }
  check_group(rare);

  // Per dimension and class, each fold holds its share of the stratum members.
  for (auto m : kMechanisms) {
    for (auto l : kLevels) {
      std::array<int, 5> per_fold{};
      int total = 0;
      for (const auto& it : items) {
        if (it.gold[m] != l) continue;
        ++total;
        ++per_fold[static_cast<std::size_t>(f.fold_of.at(it.episode_id))];
      }
      std::size_t strata_with_class = 0;
      for (const auto& [kk, ids] : strata) strata_with_class += kk[index_of(m)] == ordinal(l);
      for (int c : per_fold) CHECK(std::abs(c - total / 5.0) <= static_cast<double>(strata_with_class));
    }
  }

  std::array<std::size_t, 5> sizes{};
  for (int j = 0; j < k; ++j) sizes[static_cast<std::size_t>(j)] = f.members(j).size();
  CHECK(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()) <= 1);
}

TEST_CASE("fold assignment is seeded and serializable") {
  auto items = random_items(200, 5);
  auto a = stratified_kfold(items, 5, 99);
  auto b = stratified_kfold(items, 5, 99);
  CHECK(folds_to_json(a).dump() == folds_to_json(b).dump());
  CHECK(folds_to_json(stratified_kfold(items, 5, 100)).dump() != folds_to_json(a).dump());
  auto back = folds_from_json(folds_to_json(a));
  CHECK(back.fold_of == a.fold_of);
  CHECK(back.k == 5);
  for (int j = 0; j < 5; ++j) {
    auto train = a.complement(j);
    auto test = a.members(j);
    CHECK(train.size() + test.size() == items.size());
  }
  CHECK_THROWS_AS(stratified_kfold(random_items(3, 1), 5, 1), Error);
  CHECK_THROWS_AS(stratified_kfold(items, 1, 1), Error);
}

TEST_CASE("per-dimension stratification") {
  auto items = random_items(300, 8);
  auto f = stratified_kfold(items, 5, 2, {Mechanism::kEmotionalResonance});
  for (auto l : kLevels) {
    std::array<int, 5> per_fold{};
    int total = 0;
    for (const auto& it : items) {
      if (it.gold[Mechanism::kEmotionalResonance] != l) continue;
      ++total;
      ++per_fold[static_cast<std::size_t>(f.fold_of.at(it.episode_id))];
    }
    for (int c : per_fold) CHECK(std::abs(c - total / 5.0) < 1.0);
  }
}

TEST_CASE("oversampling examples") {
  SUBCASE("balanced strata are untouched") {
    std::vector<LabeledId> items;
    for (int i = 0; i < 6; ++i) {
      items.push_back({"w" + std::to_string(i), RatingVector::uniform(Level::kWeak)});
      items.push_back({"s" + std::to_string(i), RatingVector::uniform(Level::kStrong)});
    }
    auto p = oversample(items, 1, 1);
    CHECK(p.sequence.size() == items.size());
    for (const auto& [id, c] : p.replication) CHECK(c == 1);
  }
  SUBCASE("two strata of sizes 2 and 6") {
    std::vector<LabeledId> items;
    for (int i = 0; i < 2; ++i) items.push_back({"a" + std::to_string(i), RatingVector::uniform(Level::kNo)});
    for (int i = 0; i < 6; ++i) items.push_back({"b" + std::to_string(i), RatingVector::uniform(Level::kStrong)});
    auto p = oversample(items, 4, 1);
    CHECK(p.sequence.size() == 12);
    CHECK(p.replication.at("a0") + p.replication.at("a1") == 6);
    CHECK(p.replication.at("a0") >= 1);
    CHECK(p.replication.at("a1") >= 1);
  }
  CHECK_THROWS_AS(oversample(std::vector<LabeledId>{}, 1), Error);
}

TEST_CASE("oversampling equalizes strata on random fixtures") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto items = random_items(150 + seed * 7, seed);
    const int rarity = 5;
    auto p = oversample(items, seed, rarity);
    StratumKeyFn key;
    std::map<std::array<int, 4>, std::size_t> sizes;
    std::map<std::string, std::array<int, 4>> key_of;
    for (const auto& it : items) {
      ++sizes[key(it.gold)];
      key_of[it.episode_id] = key(it.gold);
    }
    auto bucket = [&](const std::array<int, 4>& kk) {
      return sizes.at(kk) < static_cast<std::size_t>(rarity) ? std::array<int, 4>{-1, -1, -1, -1} : kk;
    };
    std::map<std::array<int, 4>, std::size_t> emitted;
    for (const auto& id : p.sequence) ++emitted[bucket(key_of.at(id))];
    std::size_t max_size = 0;
    std::map<std::array<int, 4>, std::size_t> input;
    for (const auto& it : items) ++input[bucket(key(it.gold))];
    for (const auto& [kk, n] : input) max_size = std::max(max_size, n);
    for (const auto& [kk, n] : emitted) CHECK(n == max_size);
    CHECK(p.sequence.size() == emitted.size() * max_size);
    for (const auto& it : items) CHECK(p.replication.at(it.episode_id) >= 1);

    auto again = oversample(items, seed, rarity);
    CHECK(sampling_plan_to_json(again).dump() == sampling_plan_to_json(p).dump());
  }
}

TEST_CASE("training targets round trip through the parser") {
  synthetic::CorpusSpec spec;
  spec.episodes = 200;
  spec.seed = 21;
  auto c = synthetic::synth_corpus(spec);
  std::map<std::string, const GoldExample*> by_id;
  std::vector<std::string> seq;
  for (const auto& g : c.gold) {
    by_id[g.episode.episode_id()] = &g;
    seq.push_back(g.episode.episode_id());
  }
  for (auto mode : {scoring::TargetMode::kWithExplanations, scoring::TargetMode::kLabelsOnly}) {
    EmitOptions o;
    o.mode = mode;
    auto ex = emit_training_examples(by_id, seq, o);
    REQUIRE(ex.size() == 200);
    int ok = 0;
    for (const auto& e : ex) {
      auto parsed = scoring::parse_model_output(e.target, mode);
      ok += parsed.vector() == by_id.at(e.episode_id)->ratings;
      if (mode == scoring::TargetMode::kWithExplanations) {
        CHECK(parsed.explanations == by_id.at(e.episode_id)->explanations);
      } else {
        CHECK(e.target.find("EXPLANATION") == std::string::npos);
      }
      CHECK(e.instruction == scoring::build_instruction(by_id.at(e.episode_id)->episode,
                                                        {20, mode, nullptr, {kMechanisms.begin(), kMechanisms.end()}}));
    }
    CHECK(ok == 200);
  }
}

TEST_CASE("labels-only target for an all-weak vector") {
  auto t = scoring::format_target(RatingVector::uniform(Level::kWeak), {}, scoring::TargetMode::kLabelsOnly);
  CHECK(t ==
        "RATINGS\nrespect_for_autonomy: 1\nstance_alignment: 1\nemotional_resonance: 1\nconversational_orientation: 1");
}

TEST_CASE("augmented emission needs explanations") {
  GoldExample g{testutil::make_episode("x"), RatingVector::uniform(Level::kNo), {}};
  std::map<std::string, const GoldExample*> by_id = {{"x", &g}};
  std::vector<std::string> seq = {"x"};
  CHECK_THROWS_WITH_AS(emit_training_examples(by_id, seq, {}), doctest::Contains("x"), Error);
  EmitOptions lo;
  lo.mode = scoring::TargetMode::kLabelsOnly;
  CHECK(emit_training_examples(by_id, seq, lo).size() == 1);
}

TEST_CASE("single-mechanism examples") {
  GoldExample g{testutil::make_episode("x"), RatingVector({Level::kNo, Level::kWeak, Level::kStrong, Level::kNo}),
                testutil::make_explanations("g")};
  std::map<std::string, const GoldExample*> by_id = {{"x", &g}};
  std::vector<std::string> seq = {"x"};
  EmitOptions o;
  o.single_mechanism = Mechanism::kEmotionalResonance;
  auto ex = emit_training_examples(by_id, seq, o);
  REQUIRE(ex.size() == 1);
  auto parsed = scoring::parse_model_output(ex[0].target, o.mode, {Mechanism::kEmotionalResonance});
  CHECK(parsed.ratings.size() == 1);
  CHECK(parsed.ratings.at(Mechanism::kEmotionalResonance) == 2);
  CHECK(ex[0].target.find("stance_alignment") == std::string::npos);
}

TEST_CASE("run manifests") {
  auto main = ManifestConfig::main_run(7);
  CHECK(main.learning_rate == 1e-5);
  CHECK(main.epochs == 3);
  CHECK(main.k == 5);
  CHECK(main.temperature == 0.0);
  CHECK(main.top_p == 1.0);
  auto abl = ManifestConfig::ablation_run(7);
  CHECK(abl.learning_rate == 5e-6);
  CHECK(abl.mode == scoring::TargetMode::kLabelsOnly);

  synthetic::CorpusSpec spec;
  spec.episodes = 30;
  auto c = synthetic::synth_corpus(spec);
  const auto fp = dataset_fingerprint(c.gold);
  CHECK(fp.rfind("sha256:", 0) == 0);
  CHECK(fp.size() == 7 + 64);
  auto reversed = c.gold;
  std::reverse(reversed.begin(), reversed.end());
  CHECK(dataset_fingerprint(reversed) == fp);
  reversed[0].ratings.set(Mechanism::kStanceAlignment,
                          reversed[0].ratings[Mechanism::kStanceAlignment] == Level::kNo ? Level::kWeak : Level::kNo);
  CHECK(dataset_fingerprint(reversed) != fp);

  auto j1 = manifest_to_json(main, fp, Json::object()).dump();
  auto j2 = manifest_to_json(ManifestConfig::main_run(7), fp, Json::object()).dump();
  CHECK(j1 == j2);
  auto j = manifest_to_json(abl, fp, Json::object());
  CHECK(j.dump().find("labels_only") != std::string::npos);
}
