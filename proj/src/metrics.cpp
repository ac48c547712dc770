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

#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

#include <fmt/format.h>

#include "error.hpp"
#include "table.hpp"

namespace counselkit::metrics {

namespace {

// Decodes one code point; malformed input yields U+FFFD and consumes one byte.
char32_t decode_utf8(std::string_view s, std::size_t i, std::size_t& len) {
  auto b = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) {
    return i + k < s.size() && (static_cast<unsigned char>(s[i + k]) & 0xC0) == 0x80;
  };
  if (b < 0x80) {
    len = 1;
    return b;
  }
  if ((b & 0xE0) == 0xC0 && b >= 0xC2 && cont(1)) {
    len = 2;
    return static_cast<char32_t>(((b & 0x1F) << 6) | (s[i + 1] & 0x3F));
  }
  if ((b & 0xF0) == 0xE0 && cont(1) && cont(2)) {
    len = 3;
    return static_cast<char32_t>(((b & 0x0F) << 12) | ((s[i + 1] & 0x3F) << 6) | (s[i + 2] & 0x3F));
  }
  if ((b & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3)) {
    len = 4;
    return static_cast<char32_t>(((b & 0x07) << 18) | ((s[i + 1] & 0x3F) << 12) | ((s[i + 2] & 0x3F) << 6) |
                                 (s[i + 3] & 0x3F));
  }
  len = 1;
  return 0xFFFD;
}

bool is_space(char32_t c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f' || c == 0x85 || c == 0xA0 ||
         c == 0x1680 || (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F || c == 0x205F ||
         c == 0x3000;
}

bool is_cjk(char32_t c) {
  return (c >= 0x4E00 && c <= 0x9FFF) ||    // unified ideographs
         (c >= 0x3400 && c <= 0x4DBF) ||    // extension A
         (c >= 0x20000 && c <= 0x2FA1F) ||  // extensions B.. and compatibility supplement
         (c >= 0xF900 && c <= 0xFAFF) ||    // compatibility ideographs
         (c >= 0x3000 && c <= 0x30FF) ||    // CJK punctuation, hiragana, katakana
         (c >= 0xFF00 && c <= 0xFFEF);      // fullwidth forms
}

std::string ngram_key(const Tokens& t, std::size_t start, int n) {
  std::string key;
  for (int k = 0; k < n; ++k) {
    if (k) key.push_back('\x1f');
    key += t[start + static_cast<std::size_t>(k)];
  }
  return key;
}

std::unordered_map<std::string, std::size_t> ngram_counts(const Tokens& t, int n) {
  std::unordered_map<std::string, std::size_t> out;
  if (t.size() < static_cast<std::size_t>(n)) return out;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= t.size(); ++i) ++out[ngram_key(t, i, n)];
  return out;
}

std::size_t clipped_overlap(const std::unordered_map<std::string, std::size_t>& cand,
                            const std::unordered_map<std::string, std::size_t>& ref) {
  std::size_t overlap = 0;
  for (const auto& [g, c] : cand) {
    auto it = ref.find(g);
    if (it != ref.end()) overlap += std::min(c, it->second);
  }
  return overlap;
}

std::size_t ngram_total(const Tokens& t, int n) {
  return t.size() >= static_cast<std::size_t>(n) ? t.size() - static_cast<std::size_t>(n) + 1 : 0;
}

double f1_of(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

constexpr double kBleuEpsilon = 1e-9;

}  // namespace

Tokenizer tokenizer_from_name(std::string_view s) {
  if (s == "auto") return Tokenizer::kAuto;
  if (s == "char") return Tokenizer::kChar;
  if (s == "whitespace") return Tokenizer::kWhitespace;
  fail(ErrorCode::kInvalidArgument, "unknown tokenizer '" + std::string(s) + "' (auto|char|whitespace)");
}

std::string_view tokenizer_name(Tokenizer t) {
  switch (t) {
    case Tokenizer::kAuto: return "auto";
    case Tokenizer::kChar: return "char";
    case Tokenizer::kWhitespace: return "whitespace";
  }
  return "auto";
}

std::vector<std::string> tokenize(std::string_view text, Tokenizer t) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (std::size_t i = 0; i < text.size();) {
    std::size_t len = 1;
    char32_t c = decode_utf8(text, i, len);
    auto bytes = std::string(text.substr(i, len));
    if (c == 0xFFFD && len == 1 && static_cast<unsigned char>(text[i]) >= 0x80) bytes = "\xEF\xBF\xBD";
    i += len;
    if (is_space(c)) {
      flush();
      continue;
    }
    if (t == Tokenizer::kChar || (t == Tokenizer::kAuto && is_cjk(c))) {
      flush();
      out.push_back(std::move(bytes));
      continue;
    }
    current += bytes;
  }
  flush();
  return out;
}

// ---- classification ----

std::size_t ConfusionMatrix::total() const {
  std::size_t t = 0;
  for (const auto& row : counts) {
    for (auto c : row) t += c;
  }
  return t;
}

MechanismReport mechanism_report(std::span<const Level> preds, std::span<const Level> golds) {
  if (preds.size() != golds.size()) fail(ErrorCode::kInvalidArgument, "prediction and gold lengths differ");
  MechanismReport r;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    ++r.confusion.counts[static_cast<std::size_t>(ordinal(golds[i]))][static_cast<std::size_t>(ordinal(preds[i]))];
  }
  const auto total = r.confusion.total();
  std::size_t correct = 0;
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    auto& cls = r.classes[c];
    correct += r.confusion.counts[c][c];
    for (std::size_t k = 0; k < 3; ++k) {
      cls.support += r.confusion.counts[c][k];
      cls.predicted += r.confusion.counts[k][c];
    }
    const double tp = static_cast<double>(r.confusion.counts[c][c]);
    cls.precision = cls.predicted ? tp / static_cast<double>(cls.predicted) : 0.0;
    cls.recall = cls.support ? tp / static_cast<double>(cls.support) : 0.0;
    cls.f1 = f1_of(cls.precision, cls.recall);
    if (cls.support == 0 && cls.predicted == 0) r.empty_classes.push_back(kLevels[c]);
    f1_sum += cls.f1;
  }
  r.macro_f1 = f1_sum / 3.0;
  r.accuracy = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  return r;
}

ClassificationReport classification_report(std::span<const RatingVector> preds, std::span<const RatingVector> golds) {
  if (preds.size() != golds.size()) {
    fail(ErrorCode::kInvalidArgument, "prediction and gold lengths differ (" + std::to_string(preds.size()) + " vs " +
                                          std::to_string(golds.size()) + ")");
  }
  ClassificationReport r;
  r.n = preds.size();
  for (auto m : kMechanisms) {
    std::vector<Level> p, g;
    p.reserve(preds.size());
    g.reserve(golds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
      p.push_back(preds[i][m]);
      g.push_back(golds[i][m]);
    }
    r.mechanisms[index_of(m)] = mechanism_report(p, g);
  }
  return r;
}

Json classification_report_to_json(const ClassificationReport& r) {
  Json mechs = Json::object();
  for (auto m : kMechanisms) {
    const auto& mr = r.mechanisms[index_of(m)];
    Json classes = Json::object();
    for (std::size_t c = 0; c < 3; ++c) {
      const auto& cs = mr.classes[c];
      classes[std::string(level_name(kLevels[c]))] = {{"precision", cs.precision},
                                                      {"recall", cs.recall},
                                                      {"f1", cs.f1},
                                                      {"support", cs.support},
                                                      {"predicted", cs.predicted}};
    }
    Json empty = Json::array();
    for (auto l : mr.empty_classes) empty.push_back(level_name(l));
    Json confusion = Json::array();
    for (const auto& row : mr.confusion.counts) confusion.push_back(row);
    mechs[std::string(mechanism_key(m))] = {{"macro_f1", mr.macro_f1},
                                            {"accuracy", mr.accuracy},
                                            {"classes", std::move(classes)},
                                            {"confusion", std::move(confusion)},
                                            {"empty_classes", std::move(empty)}};
  }
  return {{"n", r.n}, {"zero_support_convention", "f1=0"}, {"mechanisms", std::move(mechs)}};
}

Aligned align_by_id(const std::map<std::string, RatingVector>& preds, const std::map<std::string, RatingVector>& golds,
                    std::span<const std::string> gold_order) {
  std::vector<std::string> missing_pred, missing_gold;
  for (const auto& id : gold_order) {
    if (!preds.count(id)) missing_pred.push_back(id);
  }
  for (const auto& [id, _] : preds) {
    if (!golds.count(id)) missing_gold.push_back(id);
  }
  if (!missing_pred.empty() || !missing_gold.empty()) {
    auto join = [](const std::vector<std::string>& v) {
      std::string s;
      for (std::size_t i = 0; i < v.size() && i < 20; ++i) s += (i ? ", " : "") + v[i];
      if (v.size() > 20) s += ", ... (" + std::to_string(v.size()) + " total)";
      return s;
    };
    std::string msg = "predictions and gold are not aligned";
    if (!missing_pred.empty()) msg += "; no prediction for: " + join(missing_pred);
    if (!missing_gold.empty()) msg += "; no gold for: " + join(missing_gold);
    fail(ErrorCode::kInvalidArgument, msg);
  }
  Aligned a;
  for (const auto& id : gold_order) {
    a.ids.push_back(id);
    a.preds.push_back(preds.at(id));
    a.golds.push_back(golds.at(id));
  }
  return a;
}

// ---- overlap ----

double bleu(const Tokens& candidate, const Tokens& reference, int n, OverlapWarnings* warn) {
  if (n < 1 || n > 4) fail(ErrorCode::kInvalidArgument, "BLEU order must be 1..4");
  if (reference.empty()) fail(ErrorCode::kInvalidArgument, "BLEU reference is empty");
  if (candidate.empty()) {
    if (warn) ++warn->empty_candidates;
    return 0.0;
  }
  double log_sum = 0.0;
  for (int k = 1; k <= n; ++k) {
    const auto total = ngram_total(candidate, k);
    const auto matches = clipped_overlap(ngram_counts(candidate, k), ngram_counts(reference, k));
    double p = total == 0 ? kBleuEpsilon
                          : (matches == 0 ? kBleuEpsilon : static_cast<double>(matches)) / static_cast<double>(total);
    log_sum += std::log(p) / n;
  }
  const double c = static_cast<double>(candidate.size());
  const double r = static_cast<double>(reference.size());
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return bp * std::exp(log_sum);
}

double rouge_n(const Tokens& candidate, const Tokens& reference, int n, OverlapWarnings* warn) {
  if (n < 1) fail(ErrorCode::kInvalidArgument, "ROUGE order must be >= 1");
  if (candidate.empty() && reference.empty()) {
    if (warn) ++warn->empty_pairs;
    return 0.0;
  }
  const auto ct = ngram_total(candidate, n);
  const auto rt = ngram_total(reference, n);
  if (ct == 0 || rt == 0) return 0.0;
  const auto overlap = static_cast<double>(clipped_overlap(ngram_counts(candidate, n), ngram_counts(reference, n)));
  return f1_of(overlap / static_cast<double>(ct), overlap / static_cast<double>(rt));
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const Tokens& candidate, const Tokens& reference, OverlapWarnings* warn) {
  if (candidate.empty() && reference.empty()) {
    if (warn) ++warn->empty_pairs;
    return 0.0;
  }
  if (candidate.empty() || reference.empty()) return 0.0;
  const double lcs = static_cast<double>(lcs_length(candidate, reference));
  return f1_of(lcs / static_cast<double>(candidate.size()), lcs / static_cast<double>(reference.size()));
}

OverlapReport overlap_report(std::span<const TextPair> pairs, Tokenizer t) {
  OverlapReport r;
  r.n = pairs.size();
  if (pairs.empty()) return r;
  for (const auto& p : pairs) {
    const auto c = tokenize(p.candidate, t);
    const auto ref = tokenize(p.reference, t);
    r.bleu1 += bleu(c, ref, 1, &r.warnings);
    r.bleu2 += bleu(c, ref, 2, nullptr);
    r.rouge1 += rouge_n(c, ref, 1, &r.warnings);
    r.rouge2 += rouge_n(c, ref, 2, nullptr);
    r.rougeL += rouge_l(c, ref, nullptr);
  }
  const double n = static_cast<double>(pairs.size());
  r.bleu1 /= n;
  r.bleu2 /= n;
  r.rouge1 /= n;
  r.rouge2 /= n;
  r.rougeL /= n;
  return r;
}

Json overlap_report_to_json(const OverlapReport& r) {
  return {{"n", r.n},
          {"bleu1", r.bleu1},
          {"bleu2", r.bleu2},
          {"rouge1", r.rouge1},
          {"rouge2", r.rouge2},
          {"rougeL", r.rougeL},
          {"empty_candidates", r.warnings.empty_candidates},
          {"empty_pairs", r.warnings.empty_pairs}};
}

std::string explanation_text(const ExplanationMap& m) {
  std::string out;
  for (auto mech : kMechanisms) {
    auto part = explanation_text(m, mech);
    if (part.empty()) continue;
    if (!out.empty()) out += "\n";
    out += part;
  }
  return out;
}

std::string explanation_text(const ExplanationMap& m, Mechanism only) {
  auto it = m.find(only);
  if (it == m.end()) return "";
  const auto& e = it->second;
  if (e.resistance_analysis.empty()) return e.response_analysis;
  if (e.response_analysis.empty()) return e.resistance_analysis;
  return e.resistance_analysis + " " + e.response_analysis;
}

// ---- cross-validation ----

CvSummary aggregate_cv(std::span<const MetricMap> fold_reports) {
  if (fold_reports.size() < 2) fail(ErrorCode::kInvalidArgument, "cross-validation summary needs at least 2 folds");
  for (std::size_t i = 1; i < fold_reports.size(); ++i) {
    bool same = fold_reports[i].size() == fold_reports[0].size() &&
                std::equal(fold_reports[i].begin(), fold_reports[i].end(), fold_reports[0].begin(),
                           [](const auto& a, const auto& b) { return a.first == b.first; });
    if (!same) fail(ErrorCode::kInvalidArgument, "fold " + std::to_string(i) + " has different metric keys than fold 0");
  }
  CvSummary s;
  s.folds = fold_reports.size();
  const double k = static_cast<double>(fold_reports.size());
  for (const auto& [key, _] : fold_reports[0]) {
    double sum = 0.0;
    for (const auto& f : fold_reports) sum += f.at(key);
    const double mean = sum / k;
    double ss = 0.0;
    for (const auto& f : fold_reports) ss += (f.at(key) - mean) * (f.at(key) - mean);
    s.metrics[key] = {mean, std::sqrt(ss / k)};
  }
  return s;
}

MetricMap flatten(const ClassificationReport& r) {
  MetricMap out;
  for (auto m : kMechanisms) {
    const auto& mr = r.mechanisms[index_of(m)];
    const std::string k(mechanism_key(m));
    out[k + ".macro_f1"] = mr.macro_f1;
    out[k + ".accuracy"] = mr.accuracy;
  }
  return out;
}

MetricMap flatten(const OverlapReport& r) {
  return {{"bleu1", r.bleu1}, {"bleu2", r.bleu2}, {"rouge1", r.rouge1}, {"rouge2", r.rouge2}, {"rougeL", r.rougeL}};
}

std::string format_mean_sd(const MeanSd& v, double scale) {
  return fmt::format("{:.2f} ± {:.2f}", v.mean * scale, v.sd * scale);
}

namespace {

std::string cell(const ResultRow& row, const std::string& key, double scale) {
  auto it = row.metrics.find(key);
  if (it == row.metrics.end()) return "-";
  return row.has_sd ? format_mean_sd(it->second, scale) : fmt::format("{:.2f}", it->second.mean * scale);
}

}  // namespace

std::string render_classification_table(std::span<const ResultRow> rows) {
  std::vector<std::string> header = {"Model Name"};
  std::vector<std::pair<std::string, std::size_t>> super = {{"", 1}};
  for (auto m : kMechanisms) {
    header.push_back("F1");
    header.push_back("Acc.");
    super.emplace_back(std::string(mechanism_display_name(m)), 2);
  }
  TextTable table(header);
  table.set_super_header(super);
  table.set_group_breaks({0, 2, 4, 6});
  for (const auto& row : rows) {
    std::vector<std::string> cells = {row.label};
    for (auto m : kMechanisms) {
      const std::string k(mechanism_key(m));
      cells.push_back(cell(row, k + ".macro_f1", 100.0));
      cells.push_back(cell(row, k + ".accuracy", 100.0));
    }
    table.add_row(std::move(cells));
  }
  return table.render();
}

std::string render_overlap_table(std::span<const ResultRow> rows, bool with_human) {
  std::vector<std::string> header = {"Model Name", "BLEU-1", "BLEU-2", "Rouge-1", "Rouge-2", "Rouge-L"};
  std::vector<std::pair<std::string, std::size_t>> super = {{"", 1}, {"Automatic Evaluation", 5}};
  if (with_human) {
    header.insert(header.end(), {"Framework Consistency", "Evidence Anchoring", "Clarity & Specificity"});
    super.emplace_back("Human Evaluation", 3);
  }
  TextTable table(header);
  table.set_super_header(super);
  table.set_group_breaks(with_human ? std::vector<std::size_t>{0, 5} : std::vector<std::size_t>{0});
  for (const auto& row : rows) {
    std::vector<std::string> cells = {row.label};
    for (const char* k : {"bleu1", "bleu2", "rouge1", "rouge2", "rougeL"}) cells.push_back(cell(row, k, 100.0));
    if (with_human) {
      for (auto d : annotation::kAuditDimensions) {
        auto it = row.metrics.find("human." + std::string(d));
        cells.push_back(it == row.metrics.end() ? "-" : format_mean_sd(it->second, 1.0));
      }
    }
    table.add_row(std::move(cells));
  }
  return table.render();
}

}  // namespace counselkit::metrics
