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

#include "annotation.hpp"
#include "framework.hpp"

namespace counselkit::metrics {

// auto: each CJK code point (Han, kana, CJK punctuation, fullwidth forms) is
// its own token and everything else is split on whitespace. char: every
// non-space code point. whitespace: whitespace split only. No case folding.
enum class Tokenizer { kAuto, kChar, kWhitespace };

Tokenizer tokenizer_from_name(std::string_view s);
std::string_view tokenizer_name(Tokenizer t);

std::vector<std::string> tokenize(std::string_view text, Tokenizer t);

using Tokens = std::vector<std::string>;

// ---- classification ----

struct ConfusionMatrix {
  std::array<std::array<std::size_t, 3>, 3> counts{};  // [gold][pred]
  std::size_t total() const;
};

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;    // gold count
  std::size_t predicted = 0;  // predicted count
};

struct MechanismReport {
  ConfusionMatrix confusion;
  std::array<ClassScores, 3> classes;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  // Classes with zero support and zero predictions; scored F1 = 0.
  std::vector<Level> empty_classes;
};

struct ClassificationReport {
  std::array<MechanismReport, 4> mechanisms;
  std::size_t n = 0;
};

MechanismReport mechanism_report(std::span<const Level> preds, std::span<const Level> golds);
ClassificationReport classification_report(std::span<const RatingVector> preds, std::span<const RatingVector> golds);
Json classification_report_to_json(const ClassificationReport& r);

// Pairs predictions with gold by episode id; throws listing unmatched ids
// on either side. Output order follows `gold_order`.
struct Aligned {
  std::vector<std::string> ids;
  std::vector<RatingVector> preds;
  std::vector<RatingVector> golds;
};
Aligned align_by_id(const std::map<std::string, RatingVector>& preds, const std::map<std::string, RatingVector>& golds,
                    std::span<const std::string> gold_order);

// ---- text overlap ----

struct OverlapWarnings {
  std::size_t empty_candidates = 0;
  std::size_t empty_pairs = 0;
};

// Modified n-gram precision with clipping, geometric mean over orders 1..n,
// brevity penalty exp(1 - r/c) when c < r. Zero-match orders are smoothed to
// 1e-9. Empty candidate scores 0; empty reference throws.
double bleu(const Tokens& candidate, const Tokens& reference, int n, OverlapWarnings* warn = nullptr);

// F1 of clipped n-gram overlap (beta = 1). Zero when either side has no n-grams.
double rouge_n(const Tokens& candidate, const Tokens& reference, int n, OverlapWarnings* warn = nullptr);

std::size_t lcs_length(const Tokens& a, const Tokens& b);
double rouge_l(const Tokens& candidate, const Tokens& reference, OverlapWarnings* warn = nullptr);

struct OverlapReport {
  double bleu1 = 0.0, bleu2 = 0.0, rouge1 = 0.0, rouge2 = 0.0, rougeL = 0.0;
  std::size_t n = 0;
  OverlapWarnings warnings;
};

struct TextPair {
  std::string candidate;
  std::string reference;
};

// Means of sentence-level scores over the pairs.
OverlapReport overlap_report(std::span<const TextPair> pairs, Tokenizer t);
Json overlap_report_to_json(const OverlapReport& r);

// Explanation text used for overlap scoring: resistance then response
// analysis for each mechanism, in canonical mechanism order.
std::string explanation_text(const ExplanationMap& m);
std::string explanation_text(const ExplanationMap& m, Mechanism only);

// ---- cross-validation ----

using MetricMap = std::map<std::string, double>;

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // population
};

struct CvSummary {
  std::map<std::string, MeanSd> metrics;
  std::size_t folds = 0;
};

// k >= 2 reports with identical key sets.
CvSummary aggregate_cv(std::span<const MetricMap> fold_reports);

// Flattened keys like "respect_for_autonomy.macro_f1", "bleu1".
MetricMap flatten(const ClassificationReport& r);
MetricMap flatten(const OverlapReport& r);

// "80.92 ± 1.55": values scaled by `scale` and printed with two decimals.
std::string format_mean_sd(const MeanSd& v, double scale = 100.0);

struct ResultRow {
  std::string label;
  std::map<std::string, MeanSd> metrics;
  bool has_sd = true;
};

// Model | per mechanism F1, Acc.
std::string render_classification_table(std::span<const ResultRow> rows);
// Model | BLEU-1 BLEU-2 Rouge-1 Rouge-2 Rouge-L [| human audit columns]
std::string render_overlap_table(std::span<const ResultRow> rows, bool with_human);

}  // namespace counselkit::metrics
