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

#include <doctest.h>

#include "error.hpp"
#include "io.hpp"
#include "pipeline.hpp"
#include "test_util.hpp"

using namespace counselkit;

namespace {

const std::filesystem::path kFixtures = CK_FIXTURE_DIR;

std::string fixture(const std::string& rel) { return (kFixtures / rel).string(); }

void check_golden(const std::filesystem::path& produced, const std::string& golden) {
  CAPTURE(golden);
  CHECK(io::read_file(produced) == io::read_file(kFixtures / "golden" / golden));
}

}  // namespace

TEST_CASE("evaluate reports match the golden tables") {
  testutil::TempDir dir("golden-eval");
  Json args = {{"gold", fixture("eval/gold.jsonl")},
               {"preds", {fixture("eval/model.jsonl"), fixture("eval/baseline.jsonl")}},
               {"labels", {"model", "baseline"}},
               {"folds", fixture("eval/folds.json")},
               {"human", fixture("eval/audit.jsonl")},
               {"tokenizer", "whitespace"},
               {"out_dir", dir.path().string()}};
  auto summary = pipeline::run_command("evaluate", args);
  CHECK(summary["runs"] == 2);
  check_golden(dir / "classification_table.txt", "classification_table.txt");
  check_golden(dir / "overlap_table.txt", "overlap_table.txt");

  auto report = io::read_json(dir / "evaluation.json");
  const auto& model = report["runs"][0]["summary"];
  CHECK(model["respect_for_autonomy.macro_f1"]["mean"].get<double>() == doctest::Approx((1.0 + 5.0 / 9.0) / 2));
  CHECK(model["respect_for_autonomy.accuracy"]["sd"].get<double>() == doctest::Approx(1.0 / 6.0));
  CHECK(model["rougeL"]["mean"].get<double>() == doctest::Approx(0.75));
  CHECK(report["human_audit"]["n"] == 4);

  auto resolved = io::read_json(dir / "resolved_config.json");
  CHECK(resolved["command"] == "evaluate");
  CHECK(resolved["options"]["tokenizer"] == "whitespace");
}

TEST_CASE("analyze-study outputs match the golden files") {
  testutil::TempDir dir("golden-study");
  pipeline::run_command("analyze-study", {{"responses", fixture("study/responses.jsonl")},
                                          {"surveys", fixture("study/surveys.jsonl")},
                                          {"out_dir", dir.path().string()}});
  check_golden(dir / "plot_data.csv", "plot_data.csv");
  check_golden(dir / "study_report.txt", "study_report.txt");
  auto report = io::read_json(dir / "study_report.json");
  CHECK(report["n_responses"] == 16);
}

TEST_CASE("pipeline outputs are byte-identical across runs") {
  testutil::TempDir a("det-a"), b("det-b");
  for (const auto* d : {&a, &b}) {
    const auto root = d->path().string();
    pipeline::run_command("synth", {{"kind", "corpus"}, {"n", 90}, {"seed", 4}, {"out_dir", root}});
    pipeline::run_command("merge-annotations", {{"annotations", root + "/annotations.jsonl"}, {"out_dir", root}});
    pipeline::run_command("split", {{"gold", root + "/gold.jsonl"}, {"k", 3}, {"seed", 4}, {"out_dir", root}});
    pipeline::run_command("oversample", {{"gold", root + "/gold.jsonl"}, {"seed", 4}, {"out_dir", root}});
    pipeline::run_command("pair", {{"transcripts", root + "/transcripts.jsonl"},
                                   {"marks", root + "/marks.jsonl"},
                                   {"out_dir", root}});
    pipeline::run_command("emit-train", {{"gold", root + "/gold.jsonl"},
                                         {"episodes", root + "/episodes.jsonl"},
                                         {"folds", root + "/folds.json"},
                                         {"seed", 4},
                                         {"out_dir", root + "/train"}});
    pipeline::run_command("score", {{"episodes", root + "/episodes.jsonl"},
                                    {"backend", {{"kind", "uniform-random"}, {"seed", 9}}},
                                    {"out_dir", root}});
  }
  for (const auto* f : {"gold.jsonl", "folds.json", "sampling_plan.json", "episodes.jsonl", "predictions.jsonl",
                        "batch_report.json", "train/fold_0/train.jsonl", "train/manifest.json"}) {
    CAPTURE(f);
    CHECK(io::read_file(a / f) == io::read_file(b / f));
  }
}

TEST_CASE("command errors carry codes") {
  testutil::TempDir dir("errors");
  auto code = [](const std::function<void()>& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kInternal;
  };
  CHECK(code([] { pipeline::run_command("nope", Json::object()); }) == ErrorCode::kInvalidArgument);
  CHECK(code([&] {
          pipeline::run_command("ingest", {{"transcripts", "/nonexistent.jsonl"}, {"out_dir", dir.path().string()}});
        }) == ErrorCode::kIo);
  CHECK(code([&] { pipeline::run_command("evaluate", {{"gold", fixture("eval/gold.jsonl")}}); }) ==
        ErrorCode::kInvalidArgument);
  io::write_file_atomic(dir / "dup.jsonl", io::read_file(kFixtures / "eval/gold.jsonl") +
                                               io::read_file(kFixtures / "eval/gold.jsonl"));
  CHECK(code([&] { pipeline::run_command("stats", {{"gold", (dir / "dup.jsonl").string()}, {"out_dir", dir.path().string()}}); }) ==
        ErrorCode::kInvalidArgument);
  CHECK(pipeline::command_names().size() == 14);
}
