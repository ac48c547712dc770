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

#include "study.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include <fmt/format.h>

#include "error.hpp"
#include "table.hpp"

namespace counselkit::study {

std::string_view condition_name(Condition c) { return c == Condition::kControl ? "control" : "experimental"; }

Condition condition_from_name(std::string_view s) {
  if (s == "control" || s == "Control") return Condition::kControl;
  if (s == "experimental" || s == "Experimental") return Condition::kExperimental;
  fail(ErrorCode::kInvalidArgument, "unknown condition '" + std::string(s) + "' (control|experimental)");
}

std::string_view phase_name(Phase p) { return p == Phase::kPre ? "pre" : "post"; }

Phase phase_from_name(std::string_view s) {
  if (s == "pre" || s == "Pre") return Phase::kPre;
  if (s == "post" || s == "Post") return Phase::kPost;
  fail(ErrorCode::kInvalidArgument, "unknown phase '" + std::string(s) + "' (pre|post)");
}

Json trial_to_json(const TrialResponse& t, Condition c) {
  return {{"participant_id", t.participant_id},
          {"condition", condition_name(c)},
          {"item_id", t.item_id},
          {"phase", phase_name(t.phase)},
          {"response_text", t.response_text},
          {"scores", ratings_to_json(t.scores)}};
}

// ---- dataset ----

StudyDataset StudyDataset::create(std::vector<Participant> participants, std::vector<TrialResponse> responses) {
  StudyDataset d;
  for (const auto& p : participants) {
    if (p.participant_id.empty()) fail(ErrorCode::kInvalidArgument, "participant id must not be empty");
    if (!d.condition_.emplace(p.participant_id, p.condition).second) {
      fail(ErrorCode::kInvalidArgument, "duplicate participant '" + p.participant_id + "'");
    }
  }
  std::set<std::tuple<std::string, int, Phase>> seen;
  for (const auto& r : responses) {
    if (!d.condition_.count(r.participant_id)) {
      fail(ErrorCode::kInvalidArgument, "response from unknown participant '" + r.participant_id + "'");
    }
    if (r.item_id < 1 || r.item_id > kItemsPerSession) {
      fail(ErrorCode::kInvalidArgument,
           fmt::format("item_id {} out of range 1..{} for '{}'", r.item_id, kItemsPerSession, r.participant_id));
    }
    if (!seen.emplace(r.participant_id, r.item_id, r.phase).second) {
      fail(ErrorCode::kConflict, fmt::format("duplicate response for participant '{}', item {}, phase {}",
                                             r.participant_id, r.item_id, phase_name(r.phase)));
    }
  }
  d.participants_ = std::move(participants);
  d.responses_ = std::move(responses);
  return d;
}

StudyDataset StudyDataset::from_records(std::span<const Json> records) {
  std::vector<Participant> participants;
  std::map<std::string, Condition> cond;
  std::vector<TrialResponse> responses;
  for (const auto& j : records) {
    TrialResponse t;
    t.participant_id = j.at("participant_id").get<std::string>();
    auto c = condition_from_name(j.at("condition").get<std::string>());
    auto [it, inserted] = cond.emplace(t.participant_id, c);
    if (inserted) {
      participants.push_back({t.participant_id, c});
    } else if (it->second != c) {
      fail(ErrorCode::kInvalidArgument, "participant '" + t.participant_id + "' appears under both conditions");
    }
    t.item_id = j.at("item_id").get<int>();
    t.phase = phase_from_name(j.at("phase").get<std::string>());
    t.response_text = j.value("response_text", "");
    t.scores = ratings_from_json(j.at("scores"));
    responses.push_back(std::move(t));
  }
  return create(std::move(participants), std::move(responses));
}

Condition StudyDataset::condition_of(const std::string& participant_id) const {
  auto it = condition_.find(participant_id);
  if (it == condition_.end()) fail(ErrorCode::kNotFound, "unknown participant '" + participant_id + "'");
  return it->second;
}

std::size_t StudyDataset::missing_cells() const {
  std::set<int> items;
  for (const auto& r : responses_) items.insert(r.item_id);
  return participants_.size() * items.size() * 2 - responses_.size();
}

std::vector<Json> StudyDataset::to_records() const {
  std::vector<Json> out;
  out.reserve(responses_.size());
  for (const auto& r : responses_) out.push_back(trial_to_json(r, condition_of(r.participant_id)));
  return out;
}

// ---- fitting ----

namespace {

constexpr double kThetaLo = -12.0;
constexpr double kThetaHi = 12.0;
constexpr double kGridStep = 0.25;
constexpr double kRelTol = 1e-8;
constexpr double kBracketDelta = 1e-3;

struct GroupStats {
  Eigen::MatrixXd xtx;
  Eigen::VectorXd xty;
  Eigen::VectorXd s;  // column sums
  double yty = 0.0;
  double sum_y = 0.0;
  double n = 0.0;
};

struct Profile {
  std::vector<GroupStats> groups;
  Eigen::Index p = 0;
  double n_total = 0.0;

  struct Eval {
    double f = 0.0;
    Eigen::VectorXd beta;
    Eigen::MatrixXd a_inv;
    double sigma2 = 0.0;
  };

  Eval eval_lambda(double lambda) const {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
    double yy = 0.0;
    double logdet_v = 0.0;
    for (const auto& g : groups) {
      const double w = lambda / (1.0 + g.n * lambda);
      a += g.xtx - w * g.s * g.s.transpose();
      b += g.xty - w * g.s * g.sum_y;
      yy += g.yty - w * g.sum_y * g.sum_y;
      logdet_v += std::log1p(g.n * lambda);
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    Eval e;
    e.beta = ldlt.solve(b);
    const double rss = yy - b.dot(e.beta);
    const double dof = n_total - static_cast<double>(p);
    e.sigma2 = rss / dof;
    double logdet_a = 0.0;
    for (Eigen::Index i = 0; i < p; ++i) logdet_a += std::log(ldlt.vectorD()(i));
    e.f = dof * std::log(e.sigma2) + logdet_v + logdet_a;
    e.a_inv = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
    return e;
  }

  double f(double theta) const { return eval_lambda(std::exp(theta)).f; }
};

}  // namespace

Eigen::VectorXd ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  return x.colPivHouseholderQr().solve(y);
}

RandomInterceptFit fit_random_intercept(const LmmData& data) {
  const auto n = data.y.size();
  const auto p = data.x.cols();
  if (data.x.rows() != n || static_cast<Eigen::Index>(data.group.size()) != n) {
    fail(ErrorCode::kInvalidArgument, "design, outcome and group sizes differ");
  }
  if (n <= p) fail(ErrorCode::kInvalidArgument, fmt::format("need more than {} observations (got {})", p, n));

  // Standardize the outcome so shifts and rescaling leave the search path unchanged.
  const double center = data.y.mean();
  const double scale = std::sqrt((data.y.array() - center).square().mean());
  if (!(scale > 0.0)) fail(ErrorCode::kNumeric, "outcome is constant; residual variance is zero");
  const Eigen::VectorXd y = (data.y.array() - center) / scale;

  std::size_t n_groups = 0;
  for (auto g : data.group) n_groups = std::max(n_groups, g + 1);
  Profile prof;
  prof.p = p;
  prof.n_total = static_cast<double>(n);
  prof.groups.assign(n_groups, GroupStats{Eigen::MatrixXd::Zero(p, p), Eigen::VectorXd::Zero(p),
                                          Eigen::VectorXd::Zero(p), 0.0, 0.0, 0.0});
  for (Eigen::Index i = 0; i < n; ++i) {
    auto& g = prof.groups[data.group[static_cast<std::size_t>(i)]];
    const Eigen::VectorXd xi = data.x.row(i).transpose();
    g.xtx += xi * xi.transpose();
    g.xty += xi * y(i);
    g.s += xi;
    g.yty += y(i) * y(i);
    g.sum_y += y(i);
    g.n += 1.0;
  }
  std::erase_if(prof.groups, [](const GroupStats& g) { return g.n == 0.0; });

  Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(p, p);
  for (const auto& g : prof.groups) xtx += g.xtx;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(xtx);
  if (lu.rank() < p) {
    fail(ErrorCode::kNumeric, fmt::format("fixed-effect design is rank deficient (rank {} of {})", lu.rank(), p));
  }

  std::vector<double> grid;
  for (double t = kThetaLo; t <= kThetaHi + 1e-12; t += kGridStep) grid.push_back(t);
  std::vector<double> fgrid;
  fgrid.reserve(grid.size());
  for (double t : grid) fgrid.push_back(prof.f(t));
  const auto best = static_cast<std::size_t>(std::min_element(fgrid.begin(), fgrid.end()) - fgrid.begin());

  auto trace = [&] {
    std::string s;
    for (std::size_t i = 0; i < grid.size(); i += 8) s += fmt::format(" ({:.2f}, {:.6g})", grid[i], fgrid[i]);
    return s;
  };

  ConvergenceInfo conv;
  Profile::Eval at;
  double lambda = 0.0;
  if (best == 0) {
    conv.boundary = true;
    conv.theta = -std::numeric_limits<double>::infinity();
    at = prof.eval_lambda(0.0);
  } else if (best == grid.size() - 1) {
    fail(ErrorCode::kNumeric, "REML profile decreases up to the upper edge of the variance-ratio range; trace:" +
                                  trace());
  } else {
    constexpr double kInvPhi = 0.6180339887498949;
    double a = grid[best - 1], b = grid[best + 1];
    double c = b - kInvPhi * (b - a), d = a + kInvPhi * (b - a);
    double fc = prof.f(c), fd = prof.f(d);
    int it = 0;
    while (b - a > kRelTol * std::max(1.0, std::abs(0.5 * (a + b)))) {
      if (++it > 500) fail(ErrorCode::kNumeric, "golden-section search did not converge; trace:" + trace());
      if (fc < fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - kInvPhi * (b - a);
        fc = prof.f(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + kInvPhi * (b - a);
        fd = prof.f(d);
      }
    }
    conv.iterations = it;
    conv.theta = 0.5 * (a + b);
    lambda = std::exp(conv.theta);
    at = prof.eval_lambda(lambda);
    const double slack = 1e-10 * std::max(1.0, std::abs(at.f));
    const double left = prof.f(conv.theta - kBracketDelta);
    const double right = prof.f(conv.theta + kBracketDelta);
    if (left < at.f - slack || right < at.f - slack) {
      fail(ErrorCode::kNumeric,
           fmt::format("bracket check failed at theta={:.6f}: f={:.10g}, f(-)={:.10g}, f(+)={:.10g}; trace:{}",
                       conv.theta, at.f, left, right, trace()));
    }
  }
  if (!(at.sigma2 > 0.0)) fail(ErrorCode::kNumeric, "residual variance estimate is not positive");

  const double dof = static_cast<double>(n - p);
  const double s2 = scale * scale;
  RandomInterceptFit out;
  out.beta = at.beta * scale + ols(data.x, Eigen::VectorXd::Constant(n, center));
  out.sigma2 = at.sigma2 * s2;
  out.sigma_u2 = conv.boundary ? 0.0 : lambda * out.sigma2;
  out.cov = at.a_inv * out.sigma2;
  conv.objective = at.f + dof * std::log(s2);
  out.reml_loglik = -0.5 * (conv.objective + dof * (1.0 + std::log(2.0 * std::numbers::pi)));
  out.convergence = conv;
  out.n_obs = static_cast<std::size_t>(n);
  out.n_groups = prof.groups.size();
  return out;
}

std::string_view term_name(Term t) {
  switch (t) {
    case Term::kIntercept: return "intercept";
    case Term::kCondition: return "condition";
    case Term::kPhase: return "phase";
    case Term::kInteraction: return "condition:phase";
  }
  return "intercept";
}

Term term_from_name(std::string_view s) {
  for (auto t : kTerms) {
    if (term_name(t) == s) return t;
  }
  if (s == "condition*phase" || s == "interaction") return Term::kInteraction;
  fail(ErrorCode::kInvalidArgument, "unknown term '" + std::string(s) + "'");
}

LmmData build_design(const StudyDataset& data, Mechanism outcome) {
  std::map<std::string, std::size_t> index;
  std::map<std::string, std::size_t> obs;
  std::array<std::size_t, 2> per_condition{};
  for (const auto& p : data.participants()) {
    index.emplace(p.participant_id, index.size());
  }
  for (const auto& r : data.responses()) ++obs[r.participant_id];
  for (const auto& p : data.participants()) {
    if (obs[p.participant_id] == 0) continue;
    if (obs[p.participant_id] < 2) {
      fail(ErrorCode::kInvalidArgument,
           "participant '" + p.participant_id + "' has fewer than 2 observations");
    }
    ++per_condition[static_cast<std::size_t>(p.condition)];
  }
  for (auto c : {Condition::kControl, Condition::kExperimental}) {
    if (per_condition[static_cast<std::size_t>(c)] < 2) {
      fail(ErrorCode::kInvalidArgument,
           fmt::format("condition '{}' has {} participant(s) with data; at least 2 are required", condition_name(c),
                       per_condition[static_cast<std::size_t>(c)]));
    }
  }
  const auto n = static_cast<Eigen::Index>(data.responses().size());
  LmmData d;
  d.y.resize(n);
  d.x.resize(n, 4);
  d.group.resize(static_cast<std::size_t>(n));
  Eigen::Index i = 0;
  for (const auto& r : data.responses()) {
    const double cond = data.condition_of(r.participant_id) == Condition::kExperimental ? 1.0 : 0.0;
    const double phase = r.phase == Phase::kPost ? 1.0 : 0.0;
    d.y(i) = ordinal(r.scores[outcome]);
    d.x.row(i) << 1.0, cond, phase, cond * phase;
    d.group[static_cast<std::size_t>(i)] = index.at(r.participant_id);
    ++i;
  }
  return d;
}

LmmFit to_lmm_fit(const RandomInterceptFit& f, Mechanism outcome) {
  if (f.beta.size() != 4) fail(ErrorCode::kInternal, "expected four fixed effects");
  LmmFit out;
  out.outcome = outcome;
  for (std::size_t k = 0; k < 4; ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    out.beta[k] = f.beta(i);
    out.se[k] = std::sqrt(std::max(0.0, f.cov(i, i)));
  }
  out.sigma_u2 = f.sigma_u2;
  out.sigma2 = f.sigma2;
  out.reml_loglik = f.reml_loglik;
  out.convergence = f.convergence;
  out.n_obs = f.n_obs;
  out.n_participants = f.n_groups;
  return out;
}

LmmFit fit_lmm(const StudyDataset& data, Mechanism outcome) {
  try {
    return to_lmm_fit(fit_random_intercept(build_design(data, outcome)), outcome);
  } catch (const Error& e) {
    throw Error(e.code(), std::string(mechanism_key(outcome)) + ": " + e.what());
  }
}

Json lmm_fit_to_json(const LmmFit& f) {
  Json fixed = Json::array();
  for (auto t : kTerms) {
    const auto w = wald_test(f, t);
    fixed.push_back({{"term", term_name(t)}, {"estimate", w.estimate}, {"se", w.se}, {"z", w.z}, {"p", w.p}});
  }
  Json conv = {{"iterations", f.convergence.iterations},
               {"boundary", f.convergence.boundary},
               {"objective", f.convergence.objective}};
  conv["log_variance_ratio"] = f.convergence.boundary ? Json(nullptr) : Json(f.convergence.theta);
  return {{"outcome", mechanism_key(f.outcome)},
          {"fixed_effects", std::move(fixed)},
          {"sigma_u2", f.sigma_u2},
          {"sigma2", f.sigma2},
          {"reml_loglik", f.reml_loglik},
          {"n_obs", f.n_obs},
          {"n_participants", f.n_participants},
          {"convergence", std::move(conv)}};
}

double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::numbers::sqrt2); }

WaldResult wald_test(const LmmFit& fit, Term term) {
  const auto k = static_cast<std::size_t>(term);
  WaldResult w;
  w.term = term;
  w.estimate = fit.beta[k];
  w.se = fit.se[k];
  if (!(w.se > 0.0)) fail(ErrorCode::kNumeric, "standard error of '" + std::string(term_name(term)) + "' is zero");
  w.z = w.estimate / w.se;
  w.p = normal_two_sided_p(w.z);
  return w;
}

// ---- cells ----

std::vector<Cell> interaction_cells(const StudyDataset& data, Mechanism outcome) {
  // (condition, phase) -> participant -> (sum, count)
  std::map<std::pair<Condition, Phase>, std::map<std::string, std::pair<double, std::size_t>>> acc;
  for (const auto& r : data.responses()) {
    auto& slot = acc[{data.condition_of(r.participant_id), r.phase}][r.participant_id];
    slot.first += ordinal(r.scores[outcome]);
    slot.second += 1;
  }
  std::vector<Cell> out;
  for (auto c : {Condition::kControl, Condition::kExperimental}) {
    for (auto ph : {Phase::kPre, Phase::kPost}) {
      auto it = acc.find({c, ph});
      if (it == acc.end() || it->second.empty()) {
        fail(ErrorCode::kInvalidArgument,
             fmt::format("{}: cell {}/{} is empty", mechanism_key(outcome), condition_name(c), phase_name(ph)));
      }
      Cell cell;
      cell.condition = c;
      cell.phase = ph;
      std::vector<double> means;
      for (const auto& [pid, sc] : it->second) {
        means.push_back(sc.first / static_cast<double>(sc.second));
        cell.n_obs += sc.second;
      }
      cell.n_participants = means.size();
      const double k = static_cast<double>(means.size());
      double sum = 0.0;
      for (double m : means) sum += m;
      cell.mean = sum / k;
      double ss = 0.0;
      for (double m : means) ss += (m - cell.mean) * (m - cell.mean);
      const double half = 1.96 * std::sqrt(ss / k) / std::sqrt(k);
      cell.ci_low = cell.mean - half;
      cell.ci_high = cell.mean + half;
      out.push_back(cell);
    }
  }
  return out;
}

// ---- surveys ----

LikertSurvey likert_from_json(const Json& j) {
  LikertSurvey s;
  s.participant_id = j.at("participant_id").get<std::string>();
  for (const auto& [q, v] : j.at("answers").items()) {
    if (!v.is_number_integer()) fail(ErrorCode::kInvalidArgument, "answer to '" + q + "' must be an integer 1..5");
    const auto n = v.get<long long>();
    if (n < 1 || n > 5) {
      fail(ErrorCode::kInvalidArgument, fmt::format("answer to '{}' out of range: {} (expected 1..5)", q, n));
    }
    s.answers[q] = static_cast<int>(n);
  }
  return s;
}

Json likert_to_json(const LikertSurvey& s) { return {{"participant_id", s.participant_id}, {"answers", s.answers}}; }

std::map<std::string, LikertStat> likert_summary(std::span<const LikertSurvey> surveys) {
  if (surveys.empty()) fail(ErrorCode::kInvalidArgument, "no surveys to summarize");
  std::map<std::string, std::vector<int>> by_q;
  for (const auto& s : surveys) {
    for (const auto& [q, v] : s.answers) {
      if (v < 1 || v > 5) fail(ErrorCode::kInvalidArgument, fmt::format("answer to '{}' out of range: {}", q, v));
      by_q[q].push_back(v);
    }
  }
  std::map<std::string, LikertStat> out;
  for (const auto& [q, vs] : by_q) {
    LikertStat st;
    st.n = vs.size();
    double sum = 0.0;
    for (int v : vs) sum += v;
    st.mean = sum / static_cast<double>(st.n);
    if (st.n > 1) {
      double ss = 0.0;
      for (int v : vs) ss += (v - st.mean) * (v - st.mean);
      st.sd = std::sqrt(ss / static_cast<double>(st.n - 1));
    }
    out[q] = st;
  }
  return out;
}

// ---- report ----

StudyReport analyze_study(const StudyDataset& data, std::span<const LikertSurvey> surveys) {
  StudyReport r;
  r.n_responses = data.responses().size();
  r.missing_cells = data.missing_cells();
  for (auto m : kMechanisms) {
    r.fits[index_of(m)] = fit_lmm(data, m);
    r.cells[index_of(m)] = interaction_cells(data, m);
  }
  if (!surveys.empty()) r.survey = likert_summary(surveys);
  return r;
}

Json study_report_to_json(const StudyReport& r) {
  Json fits = Json::array();
  Json wald = Json::object();
  Json cells = Json::object();
  for (auto m : kMechanisms) {
    const auto& f = r.fits[index_of(m)];
    fits.push_back(lmm_fit_to_json(f));
    const auto w = wald_test(f, Term::kInteraction);
    wald[std::string(mechanism_key(m))] = {{"term", term_name(w.term)}, {"estimate", w.estimate}, {"se", w.se},
                                           {"z", w.z}, {"p", w.p}};
    Json cs = Json::array();
    for (const auto& c : r.cells[index_of(m)]) {
      cs.push_back({{"condition", condition_name(c.condition)},
                    {"phase", phase_name(c.phase)},
                    {"mean", c.mean},
                    {"ci_low", c.ci_low},
                    {"ci_high", c.ci_high},
                    {"n_participants", c.n_participants},
                    {"n_obs", c.n_obs}});
    }
    cells[std::string(mechanism_key(m))] = std::move(cs);
  }
  Json survey = Json::object();
  for (const auto& [q, st] : r.survey) survey[q] = {{"mean", st.mean}, {"sd", st.sd}, {"n", st.n}};
  return {{"model", "outcome ~ condition * phase + (1 | participant), REML"},
          {"outcome_scale", "level ordinal 0/1/2"},
          {"inference", "wald_z"},
          {"n_responses", r.n_responses},
          {"missing_cells", r.missing_cells},
          {"fits", std::move(fits)},
          {"interaction_tests", std::move(wald)},
          {"interaction_cells", std::move(cells)},
          {"survey", std::move(survey)}};
}

std::string plot_data_csv(const StudyReport& r) {
  std::string out = "condition,phase,mechanism,mean,ci_low,ci_high\n";
  for (auto m : kMechanisms) {
    for (const auto& c : r.cells[index_of(m)]) {
      out += fmt::format("{},{},{},{:.6f},{:.6f},{:.6f}\n", condition_name(c.condition), phase_name(c.phase),
                         mechanism_key(m), c.mean, c.ci_low, c.ci_high);
    }
  }
  return out;
}

namespace {

// Rounds before formatting so tiny negatives do not print as -0.000.
std::string fixed(double v, int digits) {
  const double scale = std::pow(10.0, digits);
  double r = std::round(v * scale) / scale;
  if (r == 0.0) r = 0.0;
  return fmt::format("{:.{}f}", r, digits);
}

std::string format_p(double p) { return p < 0.001 ? "<.001" : fmt::format("{:.3f}", p); }

std::string format_cell(const Cell& c) {
  return fixed(c.mean, 2) + " [" + fixed(c.ci_low, 2) + ", " + fixed(c.ci_high, 2) + "]";
}

}  // namespace

std::string render_study_report(const StudyReport& r) {
  TextTable fits({"Dimension", "Intercept", "Condition", "Phase", "Condition x Phase", "SE", "z", "p", "sigma_u^2",
                  "sigma^2"});
  fits.set_group_breaks({0, 4, 7});
  for (auto m : kMechanisms) {
    const auto& f = r.fits[index_of(m)];
    const auto w = wald_test(f, Term::kInteraction);
    fits.add_row({std::string(mechanism_display_name(m)), fixed(f.beta[0], 3), fixed(f.beta[1], 3),
                  fixed(f.beta[2], 3), fixed(w.estimate, 3), fixed(w.se, 3), fixed(w.z, 2), format_p(w.p),
                  fixed(f.sigma_u2, 3), fixed(f.sigma2, 3)});
  }
  TextTable cells({"Dimension", "Group", "Pre", "Post"});
  cells.set_group_breaks({1});
  for (auto m : kMechanisms) {
    const auto& cs = r.cells[index_of(m)];
    cells.add_row({std::string(mechanism_display_name(m)), "Control", format_cell(cs[0]), format_cell(cs[1])});
    cells.add_row({"", "Experimental", format_cell(cs[2]), format_cell(cs[3])});
  }
  std::string out = "Linear mixed-effects fits (REML, random intercept per participant; Wald z for Condition x Phase)\n";
  out += fits.render();
  out += fmt::format("\nInteraction cells: mean [95% CI] over participant means ({} responses, {} missing)\n",
                     r.n_responses, r.missing_cells);
  out += cells.render();
  if (!r.survey.empty()) {
    out += "\nSurvey (5-point scale)\n";
    for (const auto& [q, st] : r.survey) out += fmt::format("  {}: M={:.2f}, SD={:.2f} (n={})\n", q, st.mean, st.sd, st.n);
  }
  return out;
}

}  // namespace counselkit::study
