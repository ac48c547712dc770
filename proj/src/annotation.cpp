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

#include "annotation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include <fmt/format.h>

#include "error.hpp"
#include "table.hpp"

namespace counselkit::annotation {

namespace {

std::string mechanism_identifier(Mechanism m) {
  // "respect_for_autonomy" -> "RespectForAutonomy"
  std::string out;
  bool upper = true;
  for (char c : mechanism_key(m)) {
    if (c == '_') {
      upper = true;
      continue;
    }
    out.push_back(upper ? static_cast<char>(c - 'a' + 'A') : c);
    upper = false;
  }
  return out;
}

std::string_view provenance_name(ProvenanceKind k) {
  return k == ProvenanceKind::kAgreement ? "agreement" : "adjudicated";
}

}  // namespace

AnnotationRecord record_from_json(const Json& j) {
  AnnotationRecord r;
  r.episode_id = j.at("episode_id").get<std::string>();
  r.annotator_id = j.at("annotator_id").get<std::string>();
  if (r.episode_id.empty() || r.annotator_id.empty()) {
    fail(ErrorCode::kParse, "annotation record needs non-empty episode_id and annotator_id");
  }
  auto role = j.value("role", "primary");
  if (role == "primary") {
    r.role = Role::kPrimary;
  } else if (role == "adjudicator") {
    r.role = Role::kAdjudicator;
  } else {
    fail(ErrorCode::kParse, "unknown annotation role '" + role + "'");
  }
  r.ratings = ratings_from_json(j.at("ratings"));
  r.explanations = explanations_from_json(j.value("explanations", Json()));
  return r;
}

Json record_to_json(const AnnotationRecord& r) {
  return {{"episode_id", r.episode_id},
          {"annotator_id", r.annotator_id},
          {"role", r.role == Role::kPrimary ? "primary" : "adjudicator"},
          {"ratings", ratings_to_json(r.ratings)},
          {"explanations", explanations_to_json(r.explanations)}};
}

Json sample_to_json(const AdjudicatedSample& s) {
  Json prov = Json::object();
  for (auto m : kMechanisms) {
    const auto& p = s.provenance[index_of(m)];
    prov[std::string(mechanism_key(m))] = {{"kind", provenance_name(p.kind)}, {"annotators", p.annotators}};
  }
  Json splits = Json::array();
  for (auto m : s.three_way_splits) splits.push_back(mechanism_key(m));
  return {{"episode_id", s.episode_id},
          {"ratings", ratings_to_json(s.final_ratings)},
          {"explanations", explanations_to_json(s.final_explanations)},
          {"provenance", std::move(prov)},
          {"three_way_splits", std::move(splits)}};
}

AdjudicatedSample sample_from_json(const Json& j) {
  AdjudicatedSample s;
  s.episode_id = j.at("episode_id").get<std::string>();
  s.final_ratings = ratings_from_json(j.at("ratings"));
  s.final_explanations = explanations_from_json(j.value("explanations", Json()));
  if (j.contains("provenance")) {
    for (const auto& [key, value] : j.at("provenance").items()) {
      auto m = mechanism_from_key(key);
      if (!m) continue;
      auto& p = s.provenance[index_of(*m)];
      p.kind = value.value("kind", "agreement") == "adjudicated" ? ProvenanceKind::kAdjudicated
                                                                 : ProvenanceKind::kAgreement;
      p.annotators = value.value("annotators", std::vector<std::string>{});
    }
  }
  for (const auto& key : j.value("three_way_splits", std::vector<std::string>{})) {
    if (auto m = mechanism_from_key(key)) s.three_way_splits.push_back(*m);
  }
  return s;
}

AdjudicatedSample merge_annotations(std::span<const AnnotationRecord> records) {
  if (records.empty()) fail(ErrorCode::kInvalidArgument, "no annotation records supplied");
  const auto& episode_id = records.front().episode_id;
  std::vector<const AnnotationRecord*> primaries;
  std::vector<const AnnotationRecord*> adjudicators;
  std::set<std::string> annotators;
  for (const auto& r : records) {
    if (r.episode_id != episode_id) {
      fail(ErrorCode::kInvalidArgument, "records mix episodes '" + episode_id + "' and '" + r.episode_id + "'");
    }
    if (!annotators.insert(r.annotator_id).second) {
      fail(ErrorCode::kInvalidArgument,
           "duplicate record for annotator '" + r.annotator_id + "' on episode '" + episode_id + "'");
    }
    (r.role == Role::kPrimary ? primaries : adjudicators).push_back(&r);
  }
  if (primaries.size() != 2) {
    fail(ErrorCode::kInvalidArgument, "episode '" + episode_id + "': expected exactly 2 primary records, got " +
                                          std::to_string(primaries.size()));
  }
  if (adjudicators.size() > 1) {
    fail(ErrorCode::kInvalidArgument, "episode '" + episode_id + "': more than one adjudicator record");
  }
  auto by_id = [](const AnnotationRecord* a, const AnnotationRecord* b) { return a->annotator_id < b->annotator_id; };
  std::sort(primaries.begin(), primaries.end(), by_id);
  const AnnotationRecord* adjudicator = adjudicators.empty() ? nullptr : adjudicators.front();

  std::vector<Mechanism> unresolved;
  for (auto m : kMechanisms) {
    if (primaries[0]->ratings[m] != primaries[1]->ratings[m] && adjudicator == nullptr) unresolved.push_back(m);
  }
  if (!unresolved.empty()) {
    std::string names;
    for (auto m : unresolved) names += (names.empty() ? "" : ", ") + mechanism_identifier(m);
    fail(ErrorCode::kInvalidArgument, "adjudication required: " + names);
  }

  AdjudicatedSample s;
  s.episode_id = episode_id;
  std::vector<const AnnotationRecord*> all = primaries;
  if (adjudicator) all.push_back(adjudicator);
  std::sort(all.begin(), all.end(), by_id);

  for (auto m : kMechanisms) {
    const Level a = primaries[0]->ratings[m];
    const Level b = primaries[1]->ratings[m];
    auto& prov = s.provenance[index_of(m)];
    Level final_level;
    if (a == b) {
      final_level = a;
      prov = {ProvenanceKind::kAgreement, {primaries[0]->annotator_id, primaries[1]->annotator_id}};
    } else {
      final_level = adjudicator->ratings[m];
      prov = {ProvenanceKind::kAdjudicated, {adjudicator->annotator_id}};
      if (final_level != a && final_level != b) s.three_way_splits.push_back(m);
    }
    s.final_ratings.set(m, final_level);
    for (const auto* r : all) {
      if (r->ratings[m] != final_level) continue;
      auto it = r->explanations.find(m);
      if (it != r->explanations.end() && !it->second.empty()) {
        s.final_explanations[m] = it->second;
        break;
      }
    }
  }
  return s;
}

MergeResult merge_all(std::span<const AnnotationRecord> records) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<AnnotationRecord>> groups;
  for (const auto& r : records) {
    auto [it, inserted] = groups.try_emplace(r.episode_id);
    if (inserted) order.push_back(r.episode_id);
    it->second.push_back(r);
  }
  MergeResult out;
  for (const auto& id : order) {
    try {
      out.samples.push_back(merge_annotations(groups.at(id)));
    } catch (const Error& e) {
      out.failures.push_back({id, e.what()});
    }
  }
  return out;
}

KappaResult cohen_kappa(std::span<const Level> a, std::span<const Level> b, KappaWeighting weighting) {
  if (a.size() != b.size()) {
    fail(ErrorCode::kInvalidArgument, "label vectors differ in length (" + std::to_string(a.size()) + " vs " +
                                          std::to_string(b.size()) + ")");
  }
  if (a.empty()) fail(ErrorCode::kInvalidArgument, "label vectors are empty");
  const double n = static_cast<double>(a.size());
  std::array<std::array<double, 3>, 3> joint{};
  std::array<double, 3> row{};
  std::array<double, 3> col{};
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto x = static_cast<std::size_t>(ordinal(a[i]));
    auto y = static_cast<std::size_t>(ordinal(b[i]));
    joint[x][y] += 1.0;
    row[x] += 1.0;
    col[y] += 1.0;
  }
  // Agreement weight: 1 on the diagonal; linear scheme gives partial credit to adjacent levels.
  auto agree = [&](std::size_t i, std::size_t j) {
    if (weighting == KappaWeighting::kNominal) return i == j ? 1.0 : 0.0;
    return 1.0 - std::abs(static_cast<double>(i) - static_cast<double>(j)) / 2.0;
  };
  KappaResult r;
  r.n = a.size();
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      r.observed += agree(i, j) * joint[i][j] / n;
      r.expected += agree(i, j) * (row[i] / n) * (col[j] / n);
    }
  }
  if (std::abs(1.0 - r.expected) < 1e-12) {
    r.degenerate_marginals = true;
    r.kappa = 1.0;
    return r;
  }
  r.kappa = (r.observed - r.expected) / (1.0 - r.expected);
  return r;
}

AgreementReport agreement(std::span<const AnnotationRecord> records, KappaWeighting weighting) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const AnnotationRecord*>> primaries;
  for (const auto& r : records) {
    if (r.role != Role::kPrimary) continue;
    auto [it, inserted] = primaries.try_emplace(r.episode_id);
    if (inserted) order.push_back(r.episode_id);
    it->second.push_back(&r);
  }
  std::array<std::vector<Level>, 4> first;
  std::array<std::vector<Level>, 4> second;
  for (const auto& id : order) {
    auto& ps = primaries.at(id);
    if (ps.size() != 2) {
      fail(ErrorCode::kInvalidArgument,
           "episode '" + id + "' has " + std::to_string(ps.size()) + " primary records; agreement needs 2");
    }
    std::sort(ps.begin(), ps.end(), [](auto* x, auto* y) { return x->annotator_id < y->annotator_id; });
    for (auto m : kMechanisms) {
      first[index_of(m)].push_back(ps[0]->ratings[m]);
      second[index_of(m)].push_back(ps[1]->ratings[m]);
    }
  }
  AgreementReport rep;
  rep.samples = order.size();
  for (auto m : kMechanisms) rep.per_mechanism[index_of(m)] = cohen_kappa(first[index_of(m)], second[index_of(m)], weighting);
  return rep;
}

Json agreement_to_json(const AgreementReport& r) {
  Json rows = Json::object();
  for (auto m : kMechanisms) {
    const auto& k = r.per_mechanism[index_of(m)];
    rows[std::string(mechanism_key(m))] = {{"kappa", k.kappa},
                                            {"observed_agreement", k.observed},
                                            {"expected_agreement", k.expected},
                                            {"degenerate_marginals", k.degenerate_marginals}};
  }
  return {{"samples", r.samples}, {"mechanisms", std::move(rows)}};
}

std::string render_agreement(const AgreementReport& r) {
  TextTable table({"Dimension", "Kappa", "p_o", "p_e", "N"});
  table.set_group_breaks({0});
  for (auto m : kMechanisms) {
    const auto& k = r.per_mechanism[index_of(m)];
    table.add_row({std::string(mechanism_display_name(m)),
                   fmt::format("{:.2f}{}", k.kappa, k.degenerate_marginals ? "*" : ""),
                   fmt::format("{:.3f}", k.observed), fmt::format("{:.3f}", k.expected), std::to_string(k.n)});
  }
  return table.render();
}

std::vector<std::string> sample_audit(std::span<const std::string> episode_ids, std::size_t n, std::uint64_t seed) {
  if (n > episode_ids.size()) {
    fail(ErrorCode::kInvalidArgument, "audit sample size " + std::to_string(n) + " exceeds dataset size " +
                                          std::to_string(episode_ids.size()));
  }
  std::set<std::string> unique(episode_ids.begin(), episode_ids.end());
  if (unique.size() != episode_ids.size()) fail(ErrorCode::kInvalidArgument, "duplicate episode ids in audit pool");
  std::vector<std::string> out;
  out.reserve(n);
  std::mt19937_64 rng(seed);
  std::sample(episode_ids.begin(), episode_ids.end(), std::back_inserter(out), n, rng);
  return out;
}

AuditRating audit_rating_from_json(const Json& j) {
  AuditRating r;
  r.episode_id = j.at("episode_id").get<std::string>();
  r.rater_id = j.value("rater_id", "");
  const auto& scores = j.at("scores");
  for (std::size_t d = 0; d < kAuditDimensions.size(); ++d) {
    const std::string key(kAuditDimensions[d]);
    if (!scores.contains(key)) fail(ErrorCode::kParse, "audit rating for '" + r.episode_id + "' lacks " + key);
    int v = scores.at(key).get<int>();
    if (v < 1 || v > 3) {
      fail(ErrorCode::kParse, "audit score " + key + "=" + std::to_string(v) + " outside 1..3");
    }
    r.scores[d] = v;
  }
  return r;
}

AuditSummary audit_summary(std::span<const AuditRating> ratings) {
  if (ratings.empty()) fail(ErrorCode::kInvalidArgument, "no audit ratings");
  AuditSummary s;
  s.n = ratings.size();
  const double n = static_cast<double>(ratings.size());
  for (std::size_t d = 0; d < 3; ++d) {
    double sum = 0.0;
    for (const auto& r : ratings) sum += r.scores[d];
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& r : ratings) ss += (r.scores[d] - mean) * (r.scores[d] - mean);
    s.dimensions[d] = {mean, std::sqrt(ss / n)};
  }
  return s;
}

Json audit_summary_to_json(const AuditSummary& s) {
  Json dims = Json::object();
  for (std::size_t d = 0; d < 3; ++d) {
    dims[std::string(kAuditDimensions[d])] = {{"mean", s.dimensions[d].mean},
                                              {"sd", s.dimensions[d].sd},
                                              {"formatted", format_mean_subscript_sd(s.dimensions[d])}};
  }
  return {{"n", s.n}, {"sd_convention", "population"}, {"dimensions", std::move(dims)}};
}

std::string format_mean_subscript_sd(const MeanSd& v) { return fmt::format("{:.2f}_{{{:.2f}}}", v.mean, v.sd); }

}  // namespace counselkit::annotation
