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
#include <vector>

#include "annotation.hpp"
#include "corpus.hpp"
#include "dataset_ops.hpp"
#include "study.hpp"

namespace counselkit::synthetic {

struct CorpusSpec {
  std::size_t episodes = 3836;
  std::uint64_t seed = 0;
  // Probability that a primary annotator reproduces the gold level.
  double annotator_accuracy = 0.85;
  int max_context_turns = 7;  // odd; context always ends on a client turn
};

// One transcript per episode. Gold levels are balanced per mechanism: each
// mechanism's column holds floor(n/3) or ceil(n/3) of every level, shuffled
// independently. Annotations are built so that merging reproduces the gold.
struct SyntheticCorpus {
  std::vector<corpus::Transcript> transcripts;
  std::vector<corpus::ResistanceMark> marks;
  std::vector<dataset::GoldExample> gold;
  std::vector<annotation::AnnotationRecord> annotations;
};

SyntheticCorpus synth_corpus(const CorpusSpec& spec);

// Deterministic explanation text for (episode, mechanism, level).
Explanation synth_explanation(const std::string& episode_id, Mechanism m, Level l);

struct StudySpec {
  std::size_t participants_per_condition = 20;
  int items = 10;
  std::array<double, 4> beta = {1.0, 0.0, 0.0, 0.5};  // intercept, condition, phase, interaction
  double sigma_u = 1.0;
  double sigma = 0.5;
  std::uint64_t seed = 0;
};

// Continuous outcomes from the random-intercept model, participants ordered
// control first. Columns: 1, condition, phase, condition*phase.
study::LmmData simulate_lmm(const StudySpec& spec);

// Ordinal version for the pipeline: each mechanism's latent outcome is
// rounded and clamped to 0..2.
study::StudyDataset synth_study(const StudySpec& spec);
std::vector<study::LikertSurvey> synth_surveys(const study::StudyDataset& data, std::uint64_t seed);

}  // namespace counselkit::synthetic
