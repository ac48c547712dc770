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

#include "pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <functional>
#include <set>

#include <fmt/format.h>

#include "annotation.hpp"
#include "corpus.hpp"
#include "dataset_ops.hpp"
#include "error.hpp"
#include "io.hpp"
#include "metrics.hpp"
#include "scoring.hpp"
#include "study.hpp"
#include "synthetic.hpp"

namespace counselkit::pipeline {

namespace fs = std::filesystem;

namespace {

// Reads options and remembers the value every lookup resolved to.
class Args {
 public:
  explicit Args(const Json& raw) : raw_(raw.is_null() ? Json::object() : raw), resolved_(raw_) {
    if (!raw_.is_object()) fail(ErrorCode::kInvalidArgument, "command arguments must be a JSON object");
  }

  bool has(const std::string& key) const { return raw_.contains(key) && !raw_.at(key).is_null(); }

  template <typename T>
  T get(const std::string& key, T fallback) {
    T v = fallback;
    if (has(key)) {
      try {
        v = raw_.at(key).get<T>();
      } catch (const Json::exception&) {
        fail(ErrorCode::kInvalidArgument, "option '" + key + "' has the wrong type");
      }
    }
    resolved_[key] = v;
    return v;
  }

  std::string path(const std::string& key) {
    if (!has(key)) fail(ErrorCode::kInvalidArgument, "missing required option '" + key + "'");
    return get<std::string>(key, "");
  }

  std::optional<std::string> opt_path(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return get<std::string>(key, "");
  }

  const Json& raw(const std::string& key) const { return raw_.at(key); }
  const Json& resolved() const { return resolved_; }

 private:
  Json raw_;
  Json resolved_;
};

fs::path prepare_out_dir(Args& a) {
  fs::path dir = a.get<std::string>("out_dir", ".");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

void write_resolved(const fs::path& dir, std::string_view command, const Args& a) {
  io::write_json(dir / "resolved_config.json",
                 {{"command", command}, {"version", kVersion}, {"options", a.resolved()}});
}

std::string with_context(const std::string& file, std::size_t line, const std::string& what) {
  return fmt::format("{}:{}: {}", file, line, what);
}

// Parses every line of a JSONL file with `fn`, prefixing errors with file:line.
template <typename T, typename Fn>
std::vector<T> load_records(const std::string& path, Fn fn) {
  auto contents = io::parse_jsonl(io::read_file(path));
  if (!contents.skipped.empty()) {
    const auto& s = contents.skipped.front();
    fail(ErrorCode::kParse, with_context(path, s.line_number, s.reason));
  }
  std::vector<T> out;
  out.reserve(contents.lines.size());
  for (const auto& line : contents.lines) {
    try {
      out.push_back(fn(line.value));
    } catch (const Error& e) {
      throw Error(e.code(), with_context(path, line.line_number, e.what()));
    } catch (const Json::exception& e) {
      fail(ErrorCode::kParse, with_context(path, line.line_number, e.what()));
    }
  }
  return out;
}

std::vector<annotation::AdjudicatedSample> load_gold(const std::string& path) {
  auto gold = load_records<annotation::AdjudicatedSample>(path, annotation::sample_from_json);
  std::set<std::string> seen;
  for (const auto& g : gold) {
    if (!seen.insert(g.episode_id).second) fail(ErrorCode::kInvalidArgument, path + ": duplicate episode '" + g.episode_id + "'");
  }
  return gold;
}

std::vector<Episode> load_episodes(const std::string& path) {
  return load_records<Episode>(path, episode_from_json);
}

std::vector<dataset::LabeledId> labeled_ids(const std::vector<annotation::AdjudicatedSample>& gold) {
  std::vector<dataset::LabeledId> out;
  out.reserve(gold.size());
  for (const auto& g : gold) out.push_back({g.episode_id, g.final_ratings});
  return out;
}

dataset::StratumKeyFn stratum_key(Args& a) {
  const auto s = a.get<std::string>("stratify", "joint");
  if (s == "joint") return {};
  auto m = mechanism_from_key(s);
  if (!m) fail(ErrorCode::kInvalidArgument, "unknown stratification '" + s + "' (joint or a mechanism key)");
  return {m};
}

std::vector<Json> to_json_all(const auto& items, auto fn) {
  std::vector<Json> out;
  out.reserve(items.size());
  for (const auto& i : items) out.push_back(fn(i));
  return out;
}

// ---- commands ----

Json cmd_ingest(Args& a) {
  const auto in = a.path("transcripts");
  const auto dir = prepare_out_dir(a);
  auto res = corpus::ingest_transcripts(io::read_file(in));
  std::vector<Json> ts;
  for (const auto& t : res.transcripts) ts.push_back(corpus::transcript_to_json(t, res.inline_marks));
  io::write_jsonl(dir / "transcripts.jsonl", ts);
  io::write_jsonl(dir / "marks.jsonl", to_json_all(res.inline_marks, corpus::mark_to_json));
  Json skipped = Json::array();
  for (const auto& s : res.report.skipped) skipped.push_back({{"line", s.line_number}, {"reason", s.reason}});
  Json report = {{"accepted", res.report.accepted},
                 {"skipped", std::move(skipped)},
                 {"warnings", res.report.warnings},
                 {"marks", res.inline_marks.size()}};
  io::write_json(dir / "ingest_report.json", report);
  write_resolved(dir, "ingest", a);
  report["outputs"] = {"transcripts.jsonl", "marks.jsonl", "ingest_report.json"};
  return report;
}

Json cmd_pair(Args& a) {
  const auto in = a.path("transcripts");
  const auto marks_path = a.opt_path("marks");
  corpus::PairingOptions opts;
  opts.max_context_turns = a.get<int>("max_context_turns", 0);
  const auto dir = prepare_out_dir(a);
  auto res = corpus::ingest_transcripts(io::read_file(in));
  auto marks = marks_path ? load_records<corpus::ResistanceMark>(*marks_path, corpus::mark_from_json) : res.inline_marks;

  std::map<std::string, std::vector<corpus::ResistanceMark>> by_transcript;
  std::vector<corpus::UnpairedMark> unpaired;
  std::set<std::string> known;
  for (const auto& t : res.transcripts) known.insert(t.transcript_id);
  for (const auto& m : marks) {
    if (!known.count(m.transcript_id)) {
      unpaired.push_back({m, "unknown transcript", true});
    } else {
      by_transcript[m.transcript_id].push_back(m);
    }
  }
  std::vector<Json> episodes;
  for (const auto& t : res.transcripts) {
    auto it = by_transcript.find(t.transcript_id);
    if (it == by_transcript.end()) continue;
    auto pr = corpus::pair_episodes(t, it->second, opts);
    for (const auto& e : pr.episodes) episodes.push_back(episode_to_json(e));
    unpaired.insert(unpaired.end(), pr.report.unpaired.begin(), pr.report.unpaired.end());
  }
  Json un = Json::array();
  for (const auto& u : unpaired) {
    un.push_back({{"mark", corpus::mark_to_json(u.mark)}, {"reason", u.reason}, {"validation_error", u.validation_error}});
  }
  io::write_jsonl(dir / "episodes.jsonl", episodes);
  Json report = {{"marks", marks.size()}, {"episodes", episodes.size()}, {"unpaired", std::move(un)},
                 {"skipped_transcript_lines", res.report.skipped.size()}};
  io::write_json(dir / "pairing_report.json", report);
  write_resolved(dir, "pair", a);
  return {{"marks", marks.size()},
          {"episodes", episodes.size()},
          {"unpaired", unpaired.size()},
          {"outputs", {"episodes.jsonl", "pairing_report.json"}}};
}

Json cmd_merge(Args& a) {
  const auto in = a.path("annotations");
  const auto dir = prepare_out_dir(a);
  auto records = load_records<annotation::AnnotationRecord>(in, annotation::record_from_json);
  auto merged = annotation::merge_all(records);
  io::write_jsonl(dir / "gold.jsonl", to_json_all(merged.samples, annotation::sample_to_json));
  Json failures = Json::array();
  for (const auto& f : merged.failures) failures.push_back({{"episode_id", f.episode_id}, {"message", f.message}});
  std::size_t adjudicated = 0, splits = 0;
  for (const auto& s : merged.samples) {
    splits += s.three_way_splits.size();
    for (const auto& p : s.provenance) adjudicated += p.kind == annotation::ProvenanceKind::kAdjudicated;
  }
  Json report = {{"records", records.size()},
                 {"samples", merged.samples.size()},
                 {"adjudicated_labels", adjudicated},
                 {"three_way_splits", splits},
                 {"failures", failures}};
  io::write_json(dir / "merge_report.json", report);
  write_resolved(dir, "merge-annotations", a);
  report["outputs"] = {"gold.jsonl", "merge_report.json"};
  return report;
}

Json cmd_agreement(Args& a) {
  const auto in = a.path("annotations");
  const auto w = a.get<std::string>("weighting", "nominal");
  if (w != "nominal" && w != "linear") fail(ErrorCode::kInvalidArgument, "weighting must be nominal or linear");
  const auto dir = prepare_out_dir(a);
  auto records = load_records<annotation::AnnotationRecord>(in, annotation::record_from_json);
  auto rep = annotation::agreement(records, w == "linear" ? annotation::KappaWeighting::kLinear
                                                          : annotation::KappaWeighting::kNominal);
  auto j = annotation::agreement_to_json(rep);
  const auto table = annotation::render_agreement(rep);
  io::write_json(dir / "agreement.json", j);
  io::write_file_atomic(dir / "agreement.txt", table);
  write_resolved(dir, "agreement", a);
  return {{"agreement", j}, {"table", table}, {"outputs", {"agreement.json", "agreement.txt"}}};
}

Json cmd_stats(Args& a) {
  const auto in = a.path("gold");
  const auto dir = prepare_out_dir(a);
  std::vector<corpus::LabeledEpisode> eps;
  for (const auto& g : load_gold(in)) eps.push_back({g.episode_id, g.final_ratings});
  auto stats = corpus::corpus_stats(eps);
  auto j = corpus::corpus_stats_to_json(stats);
  const auto table = corpus::render_corpus_stats(stats);
  io::write_json(dir / "corpus_stats.json", j);
  io::write_file_atomic(dir / "corpus_stats.txt", table);
  write_resolved(dir, "stats", a);
  return {{"stats", j}, {"table", table}, {"outputs", {"corpus_stats.json", "corpus_stats.txt"}}};
}

Json cmd_split(Args& a) {
  const auto in = a.path("gold");
  const int k = a.get<int>("k", 5);
  const auto seed = a.get<std::uint64_t>("seed", 0);
  auto key = stratum_key(a);
  const auto dir = prepare_out_dir(a);
  auto gold = load_gold(in);
  auto folds = dataset::stratified_kfold(labeled_ids(gold), k, seed, key);
  auto j = dataset::folds_to_json(folds);
  j["stratification"] = key.single ? std::string(mechanism_key(*key.single)) : "joint";
  io::write_json(dir / "folds.json", j);
  write_resolved(dir, "split", a);
  Json sizes = Json::array();
  for (int f = 0; f < k; ++f) sizes.push_back(folds.members(f).size());
  return {{"k", k}, {"seed", seed}, {"fold_sizes", std::move(sizes)}, {"outputs", {"folds.json"}}};
}

std::vector<dataset::LabeledId> training_subset(Args& a, const std::vector<annotation::AdjudicatedSample>& gold) {
  auto ids = labeled_ids(gold);
  const auto folds_path = a.opt_path("folds");
  if (!folds_path) return ids;
  const int fold = a.get<int>("fold", 0);
  auto folds = dataset::folds_from_json(io::read_json(*folds_path));
  if (fold < 0 || fold >= folds.k) fail(ErrorCode::kInvalidArgument, fmt::format("fold {} outside 0..{}", fold, folds.k - 1));
  std::vector<dataset::LabeledId> out;
  for (auto& l : ids) {
    auto it = folds.fold_of.find(l.episode_id);
    if (it == folds.fold_of.end()) fail(ErrorCode::kInvalidArgument, "episode '" + l.episode_id + "' has no fold");
    if (it->second != fold) out.push_back(std::move(l));
  }
  return out;
}

Json cmd_oversample(Args& a) {
  const auto in = a.path("gold");
  const auto seed = a.get<std::uint64_t>("seed", 0);
  const int rarity = a.get<int>("rarity_threshold", 5);
  auto key = stratum_key(a);
  auto gold = load_gold(in);
  auto training = training_subset(a, gold);
  const auto dir = prepare_out_dir(a);
  auto plan = dataset::oversample(training, seed, rarity, key);
  io::write_json(dir / "sampling_plan.json", dataset::sampling_plan_to_json(plan));
  write_resolved(dir, "oversample", a);
  return {{"input", training.size()},
          {"output", plan.sequence.size()},
          {"strata", plan.strata},
          {"target_per_stratum", plan.target_per_stratum},
          {"outputs", {"sampling_plan.json"}}};
}

std::vector<dataset::GoldExample> join_gold(const std::vector<annotation::AdjudicatedSample>& gold,
                                            const std::vector<Episode>& episodes) {
  std::map<std::string, const Episode*> by_id;
  for (const auto& e : episodes) by_id[e.episode_id()] = &e;
  std::vector<dataset::GoldExample> out;
  for (const auto& g : gold) {
    auto it = by_id.find(g.episode_id);
    if (it == by_id.end()) fail(ErrorCode::kNotFound, "gold episode '" + g.episode_id + "' is missing from the episodes file");
    out.push_back({*it->second, g.final_ratings, g.final_explanations});
  }
  return out;
}

Json cmd_emit_train(Args& a) {
  const auto gold_path = a.path("gold");
  const auto episodes_path = a.path("episodes");
  const auto mode = scoring::target_mode_from_name(a.get<std::string>("mode", "with_explanations"));
  const auto seed = a.get<std::uint64_t>("seed", 0);
  const bool do_oversample = a.get<bool>("oversample", true);
  const int rarity = a.get<int>("rarity_threshold", 5);
  const int max_turns = a.get<int>("max_context_turns", 20);
  std::optional<Mechanism> single;
  if (auto s = a.get<std::string>("mechanism", ""); !s.empty()) {
    single = mechanism_from_key(s);
    if (!single) fail(ErrorCode::kInvalidArgument, "unknown mechanism '" + s + "'");
  }
  const auto dir = prepare_out_dir(a);
  auto examples = join_gold(load_gold(gold_path), load_episodes(episodes_path));
  std::map<std::string, const dataset::GoldExample*> by_id;
  std::vector<dataset::LabeledId> all;
  for (const auto& e : examples) {
    by_id[e.episode.episode_id()] = &e;
    all.push_back({e.episode.episode_id(), e.ratings});
  }
  dataset::EmitOptions opts;
  opts.mode = mode;
  opts.prompt.max_context_turns = max_turns;
  opts.single_mechanism = single;
  dataset::StratumKeyFn key{single};

  auto emit = [&](const fs::path& file, const std::vector<std::string>& seq) {
    io::write_jsonl(file, to_json_all(dataset::emit_training_examples(by_id, seq, opts), dataset::training_example_to_json));
    return seq.size();
  };
  auto train_sequence = [&](std::span<const dataset::LabeledId> train) {
    if (do_oversample) return dataset::oversample(train, seed, rarity, key).sequence;
    std::vector<std::string> seq;
    for (const auto& l : train) seq.push_back(l.episode_id);
    return seq;
  };

  Json files = Json::object();
  Json counts = Json::object();
  if (auto folds_path = a.opt_path("folds")) {
    auto folds = dataset::folds_from_json(io::read_json(*folds_path));
    std::vector<int> which;
    if (a.has("fold")) {
      which.push_back(a.get<int>("fold", 0));
    } else {
      for (int f = 0; f < folds.k; ++f) which.push_back(f);
    }
    for (int f : which) {
      if (f < 0 || f >= folds.k) fail(ErrorCode::kInvalidArgument, fmt::format("fold {} outside 0..{}", f, folds.k - 1));
      std::vector<dataset::LabeledId> train;
      std::vector<std::string> val;
      for (const auto& l : all) {
        auto it = folds.fold_of.find(l.episode_id);
        if (it == folds.fold_of.end()) fail(ErrorCode::kInvalidArgument, "episode '" + l.episode_id + "' has no fold");
        if (it->second == f) {
          val.push_back(l.episode_id);
        } else {
          train.push_back(l);
        }
      }
      const auto sub = fs::path(fmt::format("fold_{}", f));
      fs::create_directories(dir / sub);
      const auto n_train = emit(dir / sub / "train.jsonl", train_sequence(train));
      const auto n_val = emit(dir / sub / "val.jsonl", val);
      files[sub.string()] = {{"train", (sub / "train.jsonl").string()}, {"validation", (sub / "val.jsonl").string()}};
      counts[sub.string()] = {{"train", n_train}, {"validation", n_val}};
    }
  } else {
    const auto n_train = emit(dir / "train.jsonl", train_sequence(all));
    files["all"] = {{"train", "train.jsonl"}};
    counts["all"] = {{"train", n_train}};
  }

  auto cfg = mode == scoring::TargetMode::kLabelsOnly ? dataset::ManifestConfig::ablation_run(seed)
                                                      : dataset::ManifestConfig::main_run(seed);
  cfg.max_context_turns = max_turns;
  cfg.learning_rate = a.get<double>("learning_rate", cfg.learning_rate);
  cfg.epochs = a.get<int>("epochs", cfg.epochs);
  cfg.base_model = a.get<std::string>("base_model", cfg.base_model);
  if (!do_oversample) cfg.oversampling = "none";
  if (single) cfg.stratification = std::string(mechanism_key(*single));
  if (a.opt_path("folds")) {
    cfg.k = static_cast<int>(dataset::folds_from_json(io::read_json(a.path("folds"))).k);
  }
  auto manifest = dataset::manifest_to_json(cfg, dataset::dataset_fingerprint(examples), files);
  io::write_json(dir / "manifest.json", manifest);
  write_resolved(dir, "emit-train", a);
  return {{"examples", counts}, {"mode", scoring::target_mode_name(mode)}, {"outputs", {"manifest.json"}}, {"files", files}};
}

scoring::ScoringOptions scoring_options(Args& a) {
  scoring::ScoringOptions o;
  o.prompt_mode = scoring::prompt_mode_from_name(a.get<std::string>("prompt_mode", "zero-shot"));
  o.target = scoring::target_mode_from_name(a.get<std::string>("target", "with_explanations"));
  Json backend = a.has("backend") ? a.raw("backend") : Json::object();
  if (backend.is_string()) backend = Json{{"kind", backend.get<std::string>()}};
  o.backend = scoring::backend_config_from_json(backend);
  o.backend.validate();
  return o;
}

Json cmd_score(Args& a) {
  const auto episodes_path = a.path("episodes");
  auto options = scoring_options(a);
  const auto dir = prepare_out_dir(a);
  std::optional<Rubric> rubric;
  if (auto rp = a.opt_path("rubric")) {
    rubric = Rubric::load(*rp);
    options.rubric = &*rubric;
  }
  auto episodes = load_episodes(episodes_path);
  if (auto folds_path = a.opt_path("folds")) {
    const int fold = a.get<int>("fold", 0);
    auto folds = dataset::folds_from_json(io::read_json(*folds_path));
    std::erase_if(episodes, [&](const Episode& e) {
      auto it = folds.fold_of.find(e.episode_id());
      return it == folds.fold_of.end() || it->second != fold;
    });
  }
  std::map<std::string, scoring::GoldLabel> gold;
  if (auto gp = a.opt_path("gold")) {
    for (const auto& g : load_gold(*gp)) gold[g.episode_id] = {g.final_ratings, g.final_explanations};
  }
  if (options.backend.kind == "echo-gold" && gold.empty()) {
    fail(ErrorCode::kInvalidArgument, "the echo-gold backend needs --gold");
  }
  auto backend = scoring::make_backend(options.backend, std::move(gold));
  auto report = scoring::score_batch(episodes, *backend, options);
  io::write_jsonl(dir / "predictions.jsonl", to_json_all(report.successes, scoring::scored_response_to_json));
  auto rj = scoring::batch_report_to_json(report, options, a.get<bool>("include_timing", false));
  io::write_json(dir / "batch_report.json", rj);
  Json resolved_backend = scoring::backend_config_to_json(options.backend);
  write_resolved(dir, "score", a);
  return {{"total", episodes.size()},
          {"succeeded", report.successes.size()},
          {"failed", report.failures.size()},
          {"backend", resolved_backend},
          {"outputs", {"predictions.jsonl", "batch_report.json"}}};
}

struct Prediction {
  std::string episode_id;
  RatingVector ratings;
  ExplanationMap explanations;
};

Prediction prediction_from_json(const Json& j) {
  return {j.at("episode_id").get<std::string>(), ratings_from_json(j.at("ratings")),
          explanations_from_json(j.value("explanations", Json()))};
}

struct EvalRun {
  std::string label;
  std::vector<Prediction> preds;
};

Json cmd_evaluate(Args& a) {
  const auto gold_path = a.path("gold");
  const auto tokenizer = metrics::tokenizer_from_name(a.get<std::string>("tokenizer", "auto"));
  std::vector<std::string> pred_paths;
  std::vector<std::string> labels;
  if (!a.has("preds")) fail(ErrorCode::kInvalidArgument, "missing required option 'preds'");
  const auto& pj = a.raw("preds");
  if (pj.is_string()) {
    pred_paths.push_back(pj.get<std::string>());
  } else {
    pred_paths = pj.get<std::vector<std::string>>();
  }
  if (a.has("labels")) labels = a.raw("labels").get<std::vector<std::string>>();
  if (a.has("label")) labels = {a.raw("label").get<std::string>()};
  if (!labels.empty() && labels.size() != pred_paths.size()) {
    fail(ErrorCode::kInvalidArgument, "give one label per predictions file");
  }
  const auto dir = prepare_out_dir(a);

  auto gold = load_gold(gold_path);
  std::map<std::string, RatingVector> gold_ratings;
  std::map<std::string, const ExplanationMap*> gold_expl;
  std::vector<std::string> gold_order;
  for (const auto& g : gold) {
    gold_ratings[g.episode_id] = g.final_ratings;
    gold_expl[g.episode_id] = &g.final_explanations;
    gold_order.push_back(g.episode_id);
  }
  std::optional<dataset::FoldAssignment> folds;
  if (auto fp = a.opt_path("folds")) folds = dataset::folds_from_json(io::read_json(*fp));

  std::optional<annotation::AuditSummary> human;
  if (auto hp = a.opt_path("human")) {
    auto ratings = load_records<annotation::AuditRating>(*hp, annotation::audit_rating_from_json);
    human = annotation::audit_summary(ratings);
  }

  std::vector<metrics::ResultRow> class_rows, overlap_rows;
  Json runs = Json::array();
  for (std::size_t r = 0; r < pred_paths.size(); ++r) {
    EvalRun run{labels.empty() ? fs::path(pred_paths[r]).stem().string() : labels[r],
                load_records<Prediction>(pred_paths[r], prediction_from_json)};
    std::map<std::string, RatingVector> pr;
    std::map<std::string, const ExplanationMap*> pe;
    bool any_explanation = false;
    for (const auto& p : run.preds) {
      if (!pr.emplace(p.episode_id, p.ratings).second) {
        fail(ErrorCode::kInvalidArgument, pred_paths[r] + ": duplicate prediction for '" + p.episode_id + "'");
      }
      pe[p.episode_id] = &p.explanations;
      for (const auto& [m, e] : p.explanations) any_explanation |= !e.empty();
    }

    auto evaluate_ids = [&](const std::vector<std::string>& ids, metrics::MetricMap& cls, metrics::MetricMap& ov,
                            Json& detail) {
      auto aligned = metrics::align_by_id(pr, gold_ratings, ids);
      auto cr = metrics::classification_report(aligned.preds, aligned.golds);
      cls = metrics::flatten(cr);
      detail["classification"] = metrics::classification_report_to_json(cr);
      if (any_explanation) {
        std::vector<metrics::TextPair> pairs;
        for (const auto& id : aligned.ids) {
          auto ref = metrics::explanation_text(*gold_expl.at(id));
          if (ref.empty()) continue;
          pairs.push_back({metrics::explanation_text(*pe.at(id)), std::move(ref)});
        }
        if (!pairs.empty()) {
          auto orpt = metrics::overlap_report(pairs, tokenizer);
          ov = metrics::flatten(orpt);
          detail["overlap"] = metrics::overlap_report_to_json(orpt);
        }
      }
    };

    metrics::ResultRow crow{run.label, {}, false};
    metrics::ResultRow orow{run.label, {}, false};
    Json rj = {{"label", run.label}, {"predictions", pred_paths[r]}};
    if (folds) {
      std::vector<metrics::MetricMap> cls_folds, ov_folds;
      Json per_fold = Json::array();
      for (int f = 0; f < folds->k; ++f) {
        metrics::MetricMap cls, ov;
        Json detail = {{"fold", f}};
        evaluate_ids(folds->members(f), cls, ov, detail);
        cls_folds.push_back(std::move(cls));
        if (!ov.empty()) ov_folds.push_back(std::move(ov));
        per_fold.push_back(std::move(detail));
      }
      auto cs = metrics::aggregate_cv(cls_folds);
      crow.metrics = cs.metrics;
      crow.has_sd = true;
      Json summary = Json::object();
      for (const auto& [k, v] : cs.metrics) summary[k] = {{"mean", v.mean}, {"sd", v.sd}};
      if (ov_folds.size() == static_cast<std::size_t>(folds->k)) {
        auto os = metrics::aggregate_cv(ov_folds);
        orow.metrics = os.metrics;
        orow.has_sd = true;
        for (const auto& [k, v] : os.metrics) summary[k] = {{"mean", v.mean}, {"sd", v.sd}};
      }
      rj["folds"] = std::move(per_fold);
      rj["summary"] = std::move(summary);
      rj["sd"] = "population";
    } else {
      metrics::MetricMap cls, ov;
      Json detail = Json::object();
      evaluate_ids(gold_order, cls, ov, detail);
      for (const auto& [k, v] : cls) crow.metrics[k] = {v, 0.0};
      for (const auto& [k, v] : ov) orow.metrics[k] = {v, 0.0};
      rj.update(detail);
    }
    class_rows.push_back(crow);
    if (!orow.metrics.empty()) {
      if (human && r == 0) {
        for (std::size_t d = 0; d < 3; ++d) {
          orow.metrics["human." + std::string(annotation::kAuditDimensions[d])] = {human->dimensions[d].mean,
                                                                                   human->dimensions[d].sd};
        }
      }
      overlap_rows.push_back(orow);
    }
    runs.push_back(std::move(rj));
  }

  const auto table2 = metrics::render_classification_table(class_rows);
  io::write_file_atomic(dir / "classification_table.txt", table2);
  Json outputs = {"evaluation.json", "classification_table.txt"};
  std::string table3;
  if (!overlap_rows.empty()) {
    table3 = metrics::render_overlap_table(overlap_rows, human.has_value());
    io::write_file_atomic(dir / "overlap_table.txt", table3);
    outputs.push_back("overlap_table.txt");
  }
  Json report = {{"gold", gold_path},
                 {"tokenizer", metrics::tokenizer_name(tokenizer)},
                 {"zero_support_convention", "f1=0"},
                 {"runs", std::move(runs)}};
  if (human) report["human_audit"] = annotation::audit_summary_to_json(*human);
  io::write_json(dir / "evaluation.json", report);
  write_resolved(dir, "evaluate", a);
  return {{"runs", pred_paths.size()}, {"classification_table", table2}, {"overlap_table", table3}, {"outputs", outputs}};
}

Json cmd_analyze_study(Args& a) {
  const auto responses = a.path("responses");
  const auto surveys_path = a.opt_path("surveys");
  const auto dir = prepare_out_dir(a);
  auto records = load_records<Json>(responses, [](const Json& j) { return j; });
  auto data = study::StudyDataset::from_records(records);
  std::vector<study::LikertSurvey> surveys;
  if (surveys_path) surveys = load_records<study::LikertSurvey>(*surveys_path, study::likert_from_json);
  auto report = study::analyze_study(data, surveys);
  const auto text = study::render_study_report(report);
  io::write_json(dir / "study_report.json", study::study_report_to_json(report));
  io::write_file_atomic(dir / "plot_data.csv", study::plot_data_csv(report));
  io::write_file_atomic(dir / "study_report.txt", text);
  write_resolved(dir, "analyze-study", a);
  Json tests = Json::object();
  for (auto m : kMechanisms) {
    auto w = study::wald_test(report.fits[index_of(m)], study::Term::kInteraction);
    tests[std::string(mechanism_key(m))] = {{"estimate", w.estimate}, {"z", w.z}, {"p", w.p}};
  }
  return {{"responses", report.n_responses},
          {"participants", data.participants().size()},
          {"interaction", std::move(tests)},
          {"table", text},
          {"outputs", {"study_report.json", "plot_data.csv", "study_report.txt"}}};
}

Json cmd_audit_sample(Args& a) {
  const auto gold_path = a.path("gold");
  const auto n = a.get<std::size_t>("n", 100);
  const auto seed = a.get<std::uint64_t>("seed", 0);
  const auto episodes_path = a.opt_path("episodes");
  const auto dir = prepare_out_dir(a);
  auto gold = load_gold(gold_path);
  std::vector<std::string> ids;
  std::map<std::string, const annotation::AdjudicatedSample*> by_id;
  for (const auto& g : gold) {
    ids.push_back(g.episode_id);
    by_id[g.episode_id] = &g;
  }
  std::map<std::string, Episode> episodes;
  if (episodes_path) {
    for (auto& e : load_episodes(*episodes_path)) episodes.emplace(e.episode_id(), std::move(e));
  }
  auto picked = annotation::sample_audit(ids, n, seed);
  std::vector<Json> rows;
  for (const auto& id : picked) {
    const auto& g = *by_id.at(id);
    Json row = {{"episode_id", id},
                {"ratings", ratings_to_json(g.final_ratings)},
                {"explanations", explanations_to_json(g.final_explanations)}};
    if (auto it = episodes.find(id); it != episodes.end()) row["episode"] = episode_to_json(it->second);
    rows.push_back(std::move(row));
  }
  io::write_jsonl(dir / "audit_sample.jsonl", rows);
  write_resolved(dir, "audit-sample", a);
  return {{"sampled", picked.size()}, {"seed", seed}, {"outputs", {"audit_sample.jsonl"}}};
}

Json cmd_audit_summary(Args& a) {
  const auto in = a.path("ratings");
  const auto dir = prepare_out_dir(a);
  auto ratings = load_records<annotation::AuditRating>(in, annotation::audit_rating_from_json);
  auto s = annotation::audit_summary(ratings);
  auto j = annotation::audit_summary_to_json(s);
  std::string line;
  for (std::size_t d = 0; d < 3; ++d) {
    line += fmt::format("{}{}: {}", d ? ", " : "", annotation::kAuditDimensions[d],
                        annotation::format_mean_subscript_sd(s.dimensions[d]));
  }
  io::write_json(dir / "audit_summary.json", j);
  write_resolved(dir, "audit-summary", a);
  return {{"summary", j}, {"line", line}, {"outputs", {"audit_summary.json"}}};
}

Json cmd_synth(Args& a) {
  const auto kind = a.get<std::string>("kind", "corpus");
  const auto seed = a.get<std::uint64_t>("seed", 0);
  const auto dir = prepare_out_dir(a);
  Json outputs = Json::array();
  Json summary = {{"kind", kind}, {"seed", seed}};
  if (kind == "corpus") {
    synthetic::CorpusSpec spec;
    spec.seed = seed;
    spec.episodes = a.get<std::size_t>("n", spec.episodes);
    spec.annotator_accuracy = a.get<double>("annotator_accuracy", spec.annotator_accuracy);
    auto c = synthetic::synth_corpus(spec);
    std::vector<Json> ts;
    for (const auto& t : c.transcripts) ts.push_back(corpus::transcript_to_json(t));
    io::write_jsonl(dir / "transcripts.jsonl", ts);
    io::write_jsonl(dir / "marks.jsonl", to_json_all(c.marks, corpus::mark_to_json));
    io::write_jsonl(dir / "annotations.jsonl", to_json_all(c.annotations, annotation::record_to_json));
    std::vector<Json> gold, items;
    for (const auto& g : c.gold) {
      gold.push_back({{"episode_id", g.episode.episode_id()},
                      {"ratings", ratings_to_json(g.ratings)},
                      {"explanations", explanations_to_json(g.explanations)}});
      if (items.size() < static_cast<std::size_t>(study::kItemsPerSession)) items.push_back(episode_to_json(g.episode));
    }
    io::write_jsonl(dir / "gold_reference.jsonl", gold);
    io::write_jsonl(dir / "item_set.jsonl", items);
    outputs = {"transcripts.jsonl", "marks.jsonl", "annotations.jsonl", "gold_reference.jsonl", "item_set.jsonl"};
    summary["episodes"] = c.gold.size();
    summary["annotations"] = c.annotations.size();
  } else if (kind == "study") {
    synthetic::StudySpec spec;
    spec.seed = seed;
    spec.participants_per_condition = a.get<std::size_t>("participants_per_condition", spec.participants_per_condition);
    spec.beta[3] = a.get<double>("interaction", spec.beta[3]);
    auto data = synthetic::synth_study(spec);
    io::write_jsonl(dir / "study_responses.jsonl", data.to_records());
    auto surveys = synthetic::synth_surveys(data, seed + 1);
    io::write_jsonl(dir / "surveys.jsonl", to_json_all(surveys, study::likert_to_json));
    outputs = {"study_responses.jsonl", "surveys.jsonl"};
    summary["responses"] = data.responses().size();
  } else {
    fail(ErrorCode::kInvalidArgument, "synth kind must be corpus or study");
  }
  write_resolved(dir, "synth", a);
  summary["outputs"] = outputs;
  return summary;
}

using Handler = std::function<Json(Args&)>;

const std::map<std::string, Handler, std::less<>>& handlers() {
  static const std::map<std::string, Handler, std::less<>> h = {
      {"ingest", cmd_ingest},
      {"pair", cmd_pair},
      {"merge-annotations", cmd_merge},
      {"agreement", cmd_agreement},
      {"stats", cmd_stats},
      {"split", cmd_split},
      {"oversample", cmd_oversample},
      {"emit-train", cmd_emit_train},
      {"score", cmd_score},
      {"evaluate", cmd_evaluate},
      {"analyze-study", cmd_analyze_study},
      {"audit-sample", cmd_audit_sample},
      {"audit-summary", cmd_audit_summary},
      {"synth", cmd_synth},
  };
  return h;
}

}  // namespace

Json run_command(std::string_view command, const Json& args) {
  auto it = handlers().find(command);
  if (it == handlers().end()) fail(ErrorCode::kInvalidArgument, "unknown command '" + std::string(command) + "'");
  Args a(args);
  try {
    return it->second(a);
  } catch (const Json::exception& e) {
    fail(ErrorCode::kParse, std::string(command) + ": " + e.what());
  }
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [k, v] : handlers()) n.push_back(k);
    return n;
  }();
  return names;
}

}  // namespace counselkit::pipeline
