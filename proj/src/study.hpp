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
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "framework.hpp"

namespace counselkit::study {

enum class Condition : std::uint8_t { kControl = 0, kExperimental = 1 };
enum class Phase : std::uint8_t { kPre = 0, kPost = 1 };

std::string_view condition_name(Condition c);  // "control" / "experimental"
Condition condition_from_name(std::string_view s);
std::string_view phase_name(Phase p);  // "pre" / "post"
Phase phase_from_name(std::string_view s);

inline constexpr int kItemsPerSession = 10;

struct Participant {
  std::string participant_id;
  Condition condition = Condition::kControl;
  bool operator==(const Participant&) const = default;
};

struct TrialResponse {
  std::string participant_id;
  int item_id = 1;  // 1..10
  Phase phase = Phase::kPre;
  std::string response_text;
  RatingVector scores;
  bool operator==(const TrialResponse&) const = default;
};

// Record shape: {participant_id, condition, item_id, phase, response_text, scores}.
Json trial_to_json(const TrialResponse& t, Condition c);

class StudyDataset {
 public:
  // Rejects duplicate (participant, item, phase), responses from unknown
  // participants, item ids outside 1..10 and duplicate participant ids.
  static StudyDataset create(std::vector<Participant> participants, std::vector<TrialResponse> responses);
  // One JSON record per response; participants are collected from the
  // records and must keep one condition throughout.
  static StudyDataset from_records(std::span<const Json> records);

  const std::vector<Participant>& participants() const { return participants_; }
  const std::vector<TrialResponse>& responses() const { return responses_; }
  Condition condition_of(const std::string& participant_id) const;
  // participants x distinct items x 2 phases, minus observed responses.
  std::size_t missing_cells() const;

  std::vector<Json> to_records() const;

 private:
  std::vector<Participant> participants_;
  std::vector<TrialResponse> responses_;
  std::map<std::string, Condition> condition_;
};

// Numeric view used by the fitter: one row per observation.
struct LmmData {
  Eigen::VectorXd y;
  Eigen::MatrixXd x;             // fixed-effect design, n x p
  std::vector<std::size_t> group;  // participant index per row
};

struct ConvergenceInfo {
  double theta = 0.0;  // log(sigma_u^2 / sigma^2) at the optimum
  int iterations = 0;
  bool boundary = false;  // optimum at the lower edge; sigma_u^2 reported as 0
  double objective = 0.0;
};

struct RandomInterceptFit {
  Eigen::VectorXd beta;
  Eigen::MatrixXd cov;  // covariance of beta
  double sigma_u2 = 0.0;
  double sigma2 = 0.0;
  double reml_loglik = 0.0;
  ConvergenceInfo convergence;
  std::size_t n_obs = 0;
  std::size_t n_groups = 0;
};

// REML with the variance ratio profiled out: a grid over log-ratio in
// [-12, 12] followed by golden-section refinement to relative tolerance 1e-8.
// Throws kNumeric on a rank-deficient design, an optimum at the upper edge or
// a failed bracket check.
RandomInterceptFit fit_random_intercept(const LmmData& data);

// Ordinary least squares on the same design, for comparison.
Eigen::VectorXd ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

enum class Term : std::uint8_t { kIntercept = 0, kCondition = 1, kPhase = 2, kInteraction = 3 };
inline constexpr std::array<Term, 4> kTerms = {Term::kIntercept, Term::kCondition, Term::kPhase, Term::kInteraction};
std::string_view term_name(Term t);  // "intercept", "condition", "phase", "condition:phase"
Term term_from_name(std::string_view s);

struct LmmFit {
  Mechanism outcome = Mechanism::kRespectForAutonomy;
  std::array<double, 4> beta{};
  std::array<double, 4> se{};
  double sigma_u2 = 0.0;
  double sigma2 = 0.0;
  double reml_loglik = 0.0;
  ConvergenceInfo convergence;
  std::size_t n_obs = 0;
  std::size_t n_participants = 0;
};

// Treatment coding: Control = 0, Pre = 0. Outcome is the level ordinal.
// Requires at least 2 participants per condition and 2 observations per
// participant.
LmmData build_design(const StudyDataset& data, Mechanism outcome);
LmmFit fit_lmm(const StudyDataset& data, Mechanism outcome);
LmmFit to_lmm_fit(const RandomInterceptFit& f, Mechanism outcome);
Json lmm_fit_to_json(const LmmFit& f);

struct WaldResult {
  Term term = Term::kInteraction;
  double estimate = 0.0;
  double se = 0.0;
  double z = 0.0;
  double p = 1.0;
};

// Two-sided p from the standard normal survival function.
WaldResult wald_test(const LmmFit& fit, Term term);
double normal_two_sided_p(double z);

struct Cell {
  Condition condition = Condition::kControl;
  Phase phase = Phase::kPre;
  double mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n_participants = 0;
  std::size_t n_obs = 0;
};

// Participant means first, then mean +- 1.96 * popSD / sqrt(n_participants).
// Cell order: control/pre, control/post, experimental/pre, experimental/post.
std::vector<Cell> interaction_cells(const StudyDataset& data, Mechanism outcome);

struct LikertSurvey {
  std::string participant_id;
  std::map<std::string, int> answers;  // question id -> 1..5
};

LikertSurvey likert_from_json(const Json& j);
Json likert_to_json(const LikertSurvey& s);

struct LikertStat {
  double mean = 0.0;
  double sd = 0.0;  // sample SD; 0 for a single answer
  std::size_t n = 0;
};

std::map<std::string, LikertStat> likert_summary(std::span<const LikertSurvey> surveys);

struct StudyReport {
  std::array<LmmFit, 4> fits;
  std::array<std::vector<Cell>, 4> cells;
  std::size_t n_responses = 0;
  std::size_t missing_cells = 0;
  std::map<std::string, LikertStat> survey;
};

StudyReport analyze_study(const StudyDataset& data, std::span<const LikertSurvey> surveys = {});
Json study_report_to_json(const StudyReport& r);
// Header: condition,phase,mechanism,mean,ci_low,ci_high
std::string plot_data_csv(const StudyReport& r);
std::string render_study_report(const StudyReport& r);

}  // namespace counselkit::study
