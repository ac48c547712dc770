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

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <pthread.h>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "counselkit/counselkit.h"

using Json = nlohmann::json;

namespace {

constexpr int kExitOperational = 1;
constexpr int kExitUsage = 2;

enum class Type { kString, kInt, kUint, kDouble, kFlag, kNegFlag, kList };

struct OptSpec {
  std::string flag;
  std::string key;
  Type type;
  std::string help;
  bool required = false;
};

struct Command {
  std::string name;
  std::string help;
  std::vector<OptSpec> options;
};

const std::vector<Command>& commands() {
  static const std::vector<Command> c = {
      {"ingest",
       "Validate raw transcripts; write transcripts.jsonl, marks.jsonl, ingest_report.json",
       {{"transcripts", "transcripts", Type::kString, "Transcript JSONL", true}}},
      {"pair",
       "Pair resistance marks with the next counselor turn; write episodes.jsonl",
       {{"transcripts", "transcripts", Type::kString, "Transcript JSONL", true},
        {"--marks", "marks", Type::kString, "Resistance marks JSONL (default: inline turn flags)"},
        {"--max-context-turns", "max_context_turns", Type::kInt, "Keep at most N context turns (0 = all)"}}},
      {"merge-annotations",
       "Merge annotator records into adjudicated gold.jsonl",
       {{"annotations", "annotations", Type::kString, "Annotation records JSONL", true}}},
      {"agreement",
       "Cohen's kappa between primary annotators per mechanism",
       {{"annotations", "annotations", Type::kString, "Annotation records JSONL", true},
        {"--weighting", "weighting", Type::kString, "nominal or linear"}}},
      {"stats",
       "Label distribution of the gold corpus",
       {{"gold", "gold", Type::kString, "Gold JSONL", true}}},
      {"split",
       "Stratified k-fold assignment; write folds.json",
       {{"gold", "gold", Type::kString, "Gold JSONL", true},
        {"-k,--folds-count", "k", Type::kInt, "Number of folds (default 5)"},
        {"--stratify", "stratify", Type::kString, "joint or a mechanism key"}}},
      {"oversample",
       "Deterministic oversampling plan for the training portion",
       {{"gold", "gold", Type::kString, "Gold JSONL", true},
        {"--folds", "folds", Type::kString, "folds.json; the held-out fold is excluded"},
        {"--fold", "fold", Type::kInt, "Held-out fold index"},
        {"--rarity-threshold", "rarity_threshold", Type::kInt, "Strata at or below this size are rare"},
        {"--stratify", "stratify", Type::kString, "joint or a mechanism key"}}},
      {"emit-train",
       "Write chat-format training/validation JSONL and manifest.json",
       {{"--gold", "gold", Type::kString, "Gold JSONL", true},
        {"--episodes", "episodes", Type::kString, "Episodes JSONL", true},
        {"--folds", "folds", Type::kString, "folds.json (one directory per fold)"},
        {"--fold", "fold", Type::kInt, "Only this fold"},
        {"--mode", "mode", Type::kString, "with_explanations or labels_only"},
        {"--no-oversample", "oversample", Type::kNegFlag, "Disable oversampling"},
        {"--rarity-threshold", "rarity_threshold", Type::kInt, "Oversampling rarity threshold"},
        {"--max-context-turns", "max_context_turns", Type::kInt, "Context window (default 20)"},
        {"--mechanism", "mechanism", Type::kString, "Single-mechanism examples"},
        {"--learning-rate", "learning_rate", Type::kDouble, "Recorded in the manifest"},
        {"--epochs", "epochs", Type::kInt, "Recorded in the manifest"},
        {"--base-model", "base_model", Type::kString, "Recorded in the manifest"}}},
      {"score",
       "Score episodes with a chat backend; write predictions.jsonl, batch_report.json",
       {{"episodes", "episodes", Type::kString, "Episodes JSONL", true},
        {"--backend", "backend", Type::kString, "Backend kind or a backend JSON file"},
        {"--prompt-mode", "prompt_mode", Type::kString, "zero-shot or tuned"},
        {"--target", "target", Type::kString, "with_explanations or labels_only"},
        {"--gold", "gold", Type::kString, "Gold JSONL (echo-gold backend)"},
        {"--rubric", "rubric", Type::kString, "Rubric JSON replacing the built-in one"},
        {"--folds", "folds", Type::kString, "folds.json"},
        {"--fold", "fold", Type::kInt, "Score only this fold"},
        {"--include-timing", "include_timing", Type::kFlag, "Add wall-clock timing to the report"}}},
      {"evaluate",
       "Classification and explanation-overlap metrics; write evaluation.json and tables",
       {{"--gold", "gold", Type::kString, "Gold JSONL", true},
        {"--preds", "preds", Type::kList, "Predictions JSONL (repeatable)", true},
        {"--label", "labels", Type::kList, "Row label per predictions file (repeatable)"},
        {"--folds", "folds", Type::kString, "folds.json; report mean and SD over folds"},
        {"--human", "human", Type::kString, "Human audit ratings JSONL"}}},
      {"analyze-study",
       "Mixed-effects analysis of study responses",
       {{"responses", "responses", Type::kString, "Study responses JSONL", true},
        {"--surveys", "surveys", Type::kString, "Likert surveys JSONL"}}},
      {"audit-sample",
       "Draw a reproducible sample of gold explanations for auditing",
       {{"gold", "gold", Type::kString, "Gold JSONL", true},
        {"-n,--count", "n", Type::kUint, "Sample size (default 100)"},
        {"--episodes", "episodes", Type::kString, "Episodes JSONL to include context"}}},
      {"audit-summary",
       "Mean and SD of audit ratings per dimension",
       {{"ratings", "ratings", Type::kString, "Audit ratings JSONL", true}}},
      {"synth",
       "Generate a synthetic corpus or study dataset",
       {{"--kind", "kind", Type::kString, "corpus or study"},
        {"-n,--episodes", "n", Type::kUint, "Corpus size"},
        {"--annotator-accuracy", "annotator_accuracy", Type::kDouble, "Primary annotator accuracy"},
        {"--participants", "participants_per_condition", Type::kUint, "Participants per condition"},
        {"--interaction", "interaction", Type::kDouble, "True condition x phase effect"}}},
  };
  return c;
}

const char* kFormats = R"(File formats (one JSON object per line unless noted):
  transcript   {"transcript_id", "turns": [{"speaker": "client"|"counselor", "text", "resistance"?: bool}], "metadata"?}
  mark         {"transcript_id", "turn_index", "detector"?, "confidence"?}
  episode      {"episode_id", "context": [turn], "response": turn, "source_transcript_id"}
  annotation   {"episode_id", "annotator_id", "role"?: "primary"|"adjudicator",
                "ratings": {mechanism: 0|1|2}, "explanations": {mechanism: {"resistance_analysis", "response_analysis"}}}
  gold         {"episode_id", "ratings", "explanations", "provenance", "three_way_splits"}
  prediction   {"episode_id", "ratings", "explanations"?}
  response     {"participant_id", "condition", "item_id", "phase": "pre"|"post", "response_text", "scores"}
  survey       {"participant_id", "answers": {question: 1..5}}
  audit rating {"episode_id", "rater_id", "scores": {"framework_consistency", "evidence_anchoring", "clarity_specificity": 1..3}}
  folds.json   {"k", "seed", "stratification", "assignments": [{"episode_id", "fold"}]}   (single JSON document)
Mechanisms: respect_for_autonomy, stance_alignment, emotional_resonance, conversational_orientation.
Exit codes: 0 success, 1 operational failure (JSON error on stderr), 2 usage error.)";

struct Bound {
  const OptSpec* spec;
  std::string value;
  std::vector<std::string> list;
  bool flag = false;
  CLI::Option* opt = nullptr;
};

void bind(CLI::App* sub, const OptSpec& spec, Bound& b) {
  b.spec = &spec;
  switch (spec.type) {
    case Type::kFlag:
    case Type::kNegFlag:
      b.opt = sub->add_flag(spec.flag, b.flag, spec.help);
      break;
    case Type::kList:
      b.opt = sub->add_option(spec.flag, b.list, spec.help);
      break;
    default:
      b.opt = sub->add_option(spec.flag, b.value, spec.help);
      if (spec.type == Type::kInt) b.opt->check(CLI::Number)->type_name("INT");
      if (spec.type == Type::kUint) b.opt->check(CLI::NonNegativeNumber)->type_name("UINT");
      if (spec.type == Type::kDouble) b.opt->check(CLI::Number)->type_name("FLOAT");
      if (spec.type == Type::kString) b.opt->type_name("TEXT");
  }
  if (spec.required) b.opt->required();
}

Json value_of(const Bound& b) {
  switch (b.spec->type) {
    case Type::kInt:
      return std::stoll(b.value);
    case Type::kUint:
      return std::stoull(b.value);
    case Type::kDouble:
      return std::stod(b.value);
    case Type::kFlag:
      return b.flag;
    case Type::kNegFlag:
      return !b.flag;
    case Type::kList:
      return b.list;
    default:
      return b.value;
  }
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return Json::parse(in);
}

int report_failure(const std::string& code, const std::string& message) {
  std::cerr << Json{{"error", {{"code", code}, {"message", message}}}}.dump() << std::endl;
  return kExitOperational;
}

struct Context {
  ck_context* ctx = nullptr;
  ~Context() { ck_context_destroy(ctx); }
};

int run_pipeline(const std::string& command, Json args, const Json& defaults) {
  if (args.contains("backend") && args["backend"].is_string()) {
    const auto b = args["backend"].get<std::string>();
    if (b.size() > 5 && b.substr(b.size() - 5) == ".json") args["backend"] = read_json_file(b);
  }
  Context c;
  if (auto st = ck_context_create(defaults.dump().c_str(), &c.ctx); st != CK_OK) {
    return report_failure(ck_status_name(st), "cannot create context");
  }
  char* out = nullptr;
  auto st = ck_run(c.ctx, command.c_str(), args.dump().c_str(), &out);
  if (st != CK_OK) return report_failure(ck_status_name(st), ck_last_error(c.ctx));
  auto summary = Json::parse(out);
  ck_free_string(out);
  for (const char* table : {"table", "classification_table", "overlap_table"}) {
    if (summary.contains(table) && summary[table].is_string()) {
      std::cerr << summary[table].get<std::string>();
      summary.erase(table);
    }
  }
  std::cout << summary.dump(2) << std::endl;
  return 0;
}

struct ServeOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string data_dir;
  std::vector<std::string> item_sets;
  std::string backend;
  std::string prompt_mode;
  std::string target;
  bool synchronous = false;
  std::optional<std::uint64_t> randomize_seed;
};

int run_serve(const ServeOptions& o, Json config) {
  config.erase("out_dir");
  config.erase("tokenizer");
  if (!o.data_dir.empty()) config["data_dir"] = o.data_dir;
  if (!o.backend.empty()) {
    config["backend"] = o.backend.size() > 5 && o.backend.substr(o.backend.size() - 5) == ".json"
                            ? read_json_file(o.backend)
                            : Json{{"kind", o.backend}};
  }
  if (!o.prompt_mode.empty()) config["prompt_mode"] = o.prompt_mode;
  if (!o.target.empty()) config["target"] = o.target;
  if (o.synchronous) config["background_scoring"] = false;
  if (o.randomize_seed) config["randomize_seed"] = *o.randomize_seed;

  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  Context c;
  if (auto st = ck_context_create(nullptr, &c.ctx); st != CK_OK) return report_failure(ck_status_name(st), "context");
  ck_service* svc = nullptr;
  if (auto st = ck_service_create(c.ctx, config.dump().c_str(), &svc); st != CK_OK) {
    return report_failure(ck_status_name(st), ck_last_error(c.ctx));
  }
  auto fail_with = [&](ck_status st) {
    auto rc = report_failure(ck_status_name(st), ck_service_last_error(svc));
    ck_service_destroy(svc);
    return rc;
  };
  for (const auto& spec : o.item_sets) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) {
      ck_service_destroy(svc);
      std::cerr << "--item-set expects ID=PATH, got '" << spec << "'" << std::endl;
      return kExitUsage;
    }
    if (auto st = ck_service_add_item_set(svc, spec.substr(0, eq).c_str(), spec.substr(eq + 1).c_str()); st != CK_OK) {
      return fail_with(st);
    }
  }
  int port = 0;
  if (auto st = ck_service_bind(svc, o.host.c_str(), o.port, &port); st != CK_OK) return fail_with(st);
  std::cout << Json{{"listening", {{"host", o.host}, {"port", port}}}}.dump() << std::endl;

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    ck_service_stop(svc);
  });
  auto st = ck_service_listen(svc);
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  if (st != CK_OK) return fail_with(st);
  ck_service_wait_idle(svc);
  ck_service_destroy(svc);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string("counselkit ") + ck_version() + ": resistance-response annotation, scoring and study tools"};
  app.footer(kFormats);
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ck_version()));

  std::string config_path, out_dir, tokenizer;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "JSON file of default options for every command")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Random seed")->type_name("UINT");
  app.add_option("--out-dir", out_dir, "Output directory (default .)");
  app.add_option("--tokenizer", tokenizer, "auto, char or whitespace")
      ->check(CLI::IsMember({"auto", "char", "whitespace"}));

  std::map<std::string, std::vector<Bound>> bound;
  std::map<std::string, CLI::App*> subs;
  for (const auto& cmd : commands()) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    auto& vec = bound[cmd.name];
    vec.resize(cmd.options.size());
    for (std::size_t i = 0; i < cmd.options.size(); ++i) bind(sub, cmd.options[i], vec[i]);
    subs[cmd.name] = sub;
  }

  ServeOptions serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the study HTTP service");
  serve_cmd->add_option("--host", serve.host, "Bind address (default 127.0.0.1)");
  serve_cmd->add_option("--port", serve.port, "Port, 0 picks a free one (default 8080)");
  serve_cmd->add_option("--data-dir", serve.data_dir, "Event log and snapshot directory");
  serve_cmd->add_option("--item-set", serve.item_sets, "ID=PATH of a 10-episode JSONL (repeatable)")->required();
  serve_cmd->add_option("--backend", serve.backend, "Backend kind or a backend JSON file");
  serve_cmd->add_option("--prompt-mode", serve.prompt_mode, "zero-shot or tuned");
  serve_cmd->add_option("--target", serve.target, "with_explanations or labels_only");
  serve_cmd->add_flag("--synchronous", serve.synchronous, "Score inside the request that completes Pre");
  serve_cmd->add_option("--randomize-seed", serve.randomize_seed, "Assign conditions when requests omit one");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  Json defaults = Json::object();
  try {
    if (!config_path.empty()) {
      defaults = read_json_file(config_path);
      if (!defaults.is_object()) throw std::runtime_error(config_path + " must hold a JSON object");
    }
  } catch (const std::exception& e) {
    return report_failure("parse", e.what());
  }
  if (seed) defaults["seed"] = *seed;
  if (!out_dir.empty()) defaults["out_dir"] = out_dir;
  if (!tokenizer.empty()) defaults["tokenizer"] = tokenizer;

  try {
    if (serve_cmd->parsed()) return run_serve(serve, defaults);
    for (const auto& cmd : commands()) {
      if (!subs[cmd.name]->parsed()) continue;
      Json args = Json::object();
      for (const auto& b : bound[cmd.name]) {
        if (b.opt->count() > 0) args[b.spec->key] = value_of(b);
      }
      return run_pipeline(cmd.name, std::move(args), defaults);
    }
  } catch (const std::exception& e) {
    return report_failure("internal", e.what());
  }
  return kExitUsage;
}
