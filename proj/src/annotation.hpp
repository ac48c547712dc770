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
#include <span>
#include <string>
#include <vector>

#include "framework.hpp"

namespace counselkit::annotation {

enum class Role { kPrimary, kAdjudicator };

struct AnnotationRecord {
  std::string episode_id;
  std::string annotator_id;
  Role role = Role::kPrimary;
  RatingVector ratings;
  ExplanationMap explanations;
};

AnnotationRecord record_from_json(const Json& j);
Json record_to_json(const AnnotationRecord& r);

enum class ProvenanceKind { kAgreement, kAdjudicated };

struct Provenance {
  ProvenanceKind kind = ProvenanceKind::kAgreement;
  std::vector<std::string> annotators;  // agreeing primaries, or the adjudicator
};

struct AdjudicatedSample {
  std::string episode_id;
  RatingVector final_ratings;
  ExplanationMap final_explanations;
  std::array<Provenance, 4> provenance;
  // Mechanisms where primaries and adjudicator gave three different levels.
  std::vector<Mechanism> three_way_splits;
};

Json sample_to_json(const AdjudicatedSample& s);
AdjudicatedSample sample_from_json(const Json& j);

// `records` holds every record for one episode: exactly two primaries and at
// most one adjudicator. Order of the records does not affect the result.
AdjudicatedSample merge_annotations(std::span<const AnnotationRecord> records);

struct MergeFailure {
  std::string episode_id;
  std::string message;
};

struct MergeResult {
  std::vector<AdjudicatedSample> samples;  // first-appearance order of episode_id
  std::vector<MergeFailure> failures;
};

MergeResult merge_all(std::span<const AnnotationRecord> records);

enum class KappaWeighting { kNominal, kLinear };

struct KappaResult {
  double kappa = 0.0;
  double observed = 0.0;  // p_o
  double expected = 0.0;  // p_e
  std::size_t n = 0;
  bool degenerate_marginals = false;  // p_e == 1; kappa reported as 1
};

KappaResult cohen_kappa(std::span<const Level> a, std::span<const Level> b,
                        KappaWeighting weighting = KappaWeighting::kNominal);

struct AgreementReport {
  std::array<KappaResult, 4> per_mechanism;
  std::size_t samples = 0;
};

// Agreement between the two primary annotators of every episode.
AgreementReport agreement(std::span<const AnnotationRecord> records,
                          KappaWeighting weighting = KappaWeighting::kNominal);
Json agreement_to_json(const AgreementReport& r);
std::string render_agreement(const AgreementReport& r);

std::vector<std::string> sample_audit(std::span<const std::string> episode_ids, std::size_t n,
                                      std::uint64_t seed);

inline constexpr std::array<std::string_view, 3> kAuditDimensions = {
    "framework_consistency", "evidence_anchoring", "clarity_specificity"};

struct AuditRating {
  std::string episode_id;
  std::string rater_id;
  std::array<int, 3> scores{};  // kAuditDimensions order, each 1..3
};

AuditRating audit_rating_from_json(const Json& j);

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
};

struct AuditSummary {
  std::array<MeanSd, 3> dimensions;  // population SD
  std::size_t n = 0;
};

AuditSummary audit_summary(std::span<const AuditRating> ratings);
Json audit_summary_to_json(const AuditSummary& s);
// "2.82_{0.38}" style: mean with the SD as a subscript.
std::string format_mean_subscript_sd(const MeanSd& v);

}  // namespace counselkit::annotation
