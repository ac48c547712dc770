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

#include "synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "error.hpp"

namespace counselkit::synthetic {

namespace {

constexpr std::array<const char*, 8> kClientOpeners = {
    "I have been feeling stuck at work lately.",
    "My parents keep asking when I will settle down.",
    "I could not sleep again last night.",
    "Things with my partner have been tense this month.",
    "I missed another deadline this week.",
    "My friends say I should just get over it.",
    "I keep going back and forth about changing jobs.",
    "Honestly I am not sure why I keep coming here.",
};

constexpr std::array<const char*, 8> kResistance = {
    "You do not understand, that would never work for me.",
    "I already tried that and it was useless.",
    "Why should I change when they are the problem?",
    "I do not want to talk about that.",
    "Whatever, it does not matter anyway.",
    "You sound just like my mother.",
    "I am fine, really, can we move on?",
    "That is easy for you to say.",
};

constexpr std::array<const char*, 6> kCounselorFiller = {
    "Can you tell me more about that?",
    "How long has it felt this way?",
    "What happened next?",
    "It sounds like a lot is going on.",
    "What would you like to focus on today?",
    "How did you respond at the time?",
};

// Response fragments per mechanism and level.
constexpr std::array<std::array<const char*, 3>, 4> kFragments = {{
    {{"You have to stop doing that right away.", "Maybe you could consider trying it once.",
      "It is your call, and you know your life best."}},
    {{"You are wrong about this.", "I see some of your point.", "We are on the same side here."}},
    {{"Let us get back to the plan.", "That sounds hard.", "It sounds like you feel hurt and exhausted."}},
    {{"Anyway, next topic.", "We could look at this a bit more.", "Let us explore what you want to happen next."}},
}};

constexpr std::array<const char*, 3> kLevelPhrases = {"shows no sign of", "shows partial", "clearly shows"};

}  // namespace

Explanation synth_explanation(const std::string& episode_id, Mechanism m, Level l) {
  Explanation e;
  e.resistance_analysis = fmt::format("In {} the client pushes back against the counselor's direction.", episode_id);
  e.response_analysis = fmt::format("The response {} {}.", kLevelPhrases[static_cast<std::size_t>(ordinal(l))],
                                    mechanism_display_name(m));
  return e;
}

SyntheticCorpus synth_corpus(const CorpusSpec& spec) {
  if (spec.episodes == 0) fail(ErrorCode::kInvalidArgument, "synthetic corpus needs at least one episode");
  if (spec.max_context_turns < 1) fail(ErrorCode::kInvalidArgument, "max_context_turns must be >= 1");
  std::mt19937_64 rng(spec.seed);
  const std::size_t n = spec.episodes;

  std::array<std::vector<Level>, 4> columns;
  for (auto& col : columns) {
    col.resize(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = kLevels[i % 3];
    std::shuffle(col.begin(), col.end(), rng);
  }

  SyntheticCorpus out;
  std::uniform_int_distribution<int> context_len(0, (spec.max_context_turns - 1) / 2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> other(1, 2);
  auto pick = [&](auto& arr) { return arr[std::uniform_int_distribution<std::size_t>(0, arr.size() - 1)(rng)]; };

  for (std::size_t i = 0; i < n; ++i) {
    corpus::Transcript t;
    t.transcript_id = fmt::format("T{:05d}", i + 1);
    const int exchanges = context_len(rng);
    int idx = 0;
    for (int k = 0; k < exchanges; ++k) {
      t.turns.push_back({Speaker::kClient, k == 0 ? pick(kClientOpeners) : pick(kResistance), idx++});
      t.turns.push_back({Speaker::kCounselor, pick(kCounselorFiller), idx++});
    }
    const int resistance_index = idx;
    t.turns.push_back({Speaker::kClient, pick(kResistance), idx++});

    RatingVector rv;
    for (auto m : kMechanisms) rv.set(m, columns[index_of(m)][i]);
    std::string response;
    for (auto m : kMechanisms) {
      if (!response.empty()) response += ' ';
      response += kFragments[index_of(m)][static_cast<std::size_t>(ordinal(rv[m]))];
    }
    Turn response_turn{Speaker::kCounselor, response, idx++};
    t.turns.push_back(response_turn);
    t.metadata = {{"source", "synthetic"}};

    std::vector<Turn> context(t.turns.begin(), t.turns.begin() + resistance_index + 1);
    auto episode = Episode::create(Episode::derive_id(t.transcript_id, response_turn.index), std::move(context),
                                   response_turn, t.transcript_id);
    ExplanationMap ex;
    for (auto m : kMechanisms) ex[m] = synth_explanation(episode.episode_id(), m, rv[m]);

    // Two primaries; an adjudicator holding the gold levels whenever they disagree.
    std::array<RatingVector, 2> primaries;
    for (auto m : kMechanisms) {
      std::array<Level, 2> lv;
      for (auto& l : lv) {
        l = unit(rng) < spec.annotator_accuracy ? rv[m]
                                                : level_from_ordinal((ordinal(rv[m]) + other(rng)) % 3);
      }
      if (lv[0] == lv[1] && lv[0] != rv[m]) lv[1] = rv[m];
      primaries[0].set(m, lv[0]);
      primaries[1].set(m, lv[1]);
    }
    for (std::size_t a = 0; a < 2; ++a) {
      annotation::AnnotationRecord rec;
      rec.episode_id = episode.episode_id();
      rec.annotator_id = a == 0 ? "ann-a" : "ann-b";
      rec.ratings = primaries[a];
      for (auto m : kMechanisms) rec.explanations[m] = synth_explanation(rec.episode_id, m, primaries[a][m]);
      out.annotations.push_back(std::move(rec));
    }
    if (primaries[0] != primaries[1]) {
      annotation::AnnotationRecord rec;
      rec.episode_id = episode.episode_id();
      rec.annotator_id = "ann-c";
      rec.role = annotation::Role::kAdjudicator;
      rec.ratings = rv;
      rec.explanations = ex;
      out.annotations.push_back(std::move(rec));
    }

    out.marks.push_back({t.transcript_id, resistance_index, "synthetic", 1.0});
    out.gold.push_back({std::move(episode), rv, std::move(ex)});
    out.transcripts.push_back(std::move(t));
  }
  return out;
}

study::LmmData simulate_lmm(const StudySpec& spec) {
  if (spec.participants_per_condition < 1 || spec.items < 1) {
    fail(ErrorCode::kInvalidArgument, "study spec needs participants and items");
  }
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> u_dist(0.0, spec.sigma_u);
  std::normal_distribution<double> e_dist(0.0, spec.sigma);
  const std::size_t participants = 2 * spec.participants_per_condition;
  const auto n = static_cast<Eigen::Index>(participants * static_cast<std::size_t>(spec.items) * 2);
  study::LmmData d;
  d.y.resize(n);
  d.x.resize(n, 4);
  d.group.resize(static_cast<std::size_t>(n));
  Eigen::Index row = 0;
  for (std::size_t p = 0; p < participants; ++p) {
    const double cond = p < spec.participants_per_condition ? 0.0 : 1.0;
    const double u = spec.sigma_u > 0.0 ? u_dist(rng) : 0.0;
    for (int phase = 0; phase < 2; ++phase) {
      for (int item = 0; item < spec.items; ++item) {
        const double ph = phase;
        const double e = spec.sigma > 0.0 ? e_dist(rng) : 0.0;
        d.x.row(row) << 1.0, cond, ph, cond * ph;
        d.y(row) = spec.beta[0] + spec.beta[1] * cond + spec.beta[2] * ph + spec.beta[3] * cond * ph + u + e;
        d.group[static_cast<std::size_t>(row)] = p;
        ++row;
      }
    }
  }
  return d;
}

study::StudyDataset synth_study(const StudySpec& spec) {
  if (spec.items > study::kItemsPerSession) {
    fail(ErrorCode::kInvalidArgument, fmt::format("at most {} items per session", study::kItemsPerSession));
  }
  std::array<study::LmmData, 4> latent;
  for (auto m : kMechanisms) {
    auto s = spec;
    s.seed = spec.seed * 4 + index_of(m);
    latent[index_of(m)] = simulate_lmm(s);
  }
  std::vector<study::Participant> participants;
  const std::size_t total = 2 * spec.participants_per_condition;
  for (std::size_t p = 0; p < total; ++p) {
    participants.push_back({fmt::format("P{:03d}", p + 1), p < spec.participants_per_condition
                                                                 ? study::Condition::kControl
                                                                 : study::Condition::kExperimental});
  }
  std::vector<study::TrialResponse> responses;
  const auto& ref = latent[0];
  for (Eigen::Index row = 0; row < ref.y.size(); ++row) {
    study::TrialResponse t;
    const auto p = ref.group[static_cast<std::size_t>(row)];
    t.participant_id = participants[p].participant_id;
    t.phase = ref.x(row, 2) > 0.5 ? study::Phase::kPost : study::Phase::kPre;
    t.item_id = static_cast<int>(row % spec.items) + 1;
    t.response_text = fmt::format("Response of {} to item {} ({}).", t.participant_id, t.item_id,
                                  study::phase_name(t.phase));
    for (auto m : kMechanisms) {
      const double v = std::clamp(std::round(latent[index_of(m)].y(row)), 0.0, 2.0);
      t.scores.set(m, level_from_ordinal(static_cast<long long>(v)));
    }
    responses.push_back(std::move(t));
  }
  return study::StudyDataset::create(std::move(participants), std::move(responses));
}

std::vector<study::LikertSurvey> synth_surveys(const study::StudyDataset& data, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::discrete_distribution<int> answer({0.0, 0.02, 0.08, 0.4, 0.5});  // index = value - 1
  std::vector<study::LikertSurvey> out;
  for (const auto& p : data.participants()) {
    if (p.condition != study::Condition::kExperimental) continue;
    study::LikertSurvey s;
    s.participant_id = p.participant_id;
    for (const char* q : {"q1_awareness", "q2_direction", "q3_confidence"}) s.answers[q] = answer(rng) + 1;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace counselkit::synthetic
