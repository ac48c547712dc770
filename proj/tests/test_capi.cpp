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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <json.hpp>

#include "counselkit/counselkit.h"

extern "C" int ck_c_header_kappa(double* out);

using Json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Context {
  ck_context* ctx = nullptr;
  explicit Context(const char* config = nullptr) { REQUIRE(ck_context_create(config, &ctx) == CK_OK); }
  ~Context() { ck_context_destroy(ctx); }
};

struct Dir {
  fs::path path;
  Dir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("ck-capi-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~Dir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& s) const { return (path / s).string(); }
};

Json run(ck_context* ctx, const std::string& command, const Json& args) {
  char* out = nullptr;
  const auto st = ck_run(ctx, command.c_str(), args.dump().c_str(), &out);
  INFO(ck_last_error(ctx));
  REQUIRE(st == CK_OK);
  Json j = Json::parse(out);
  ck_free_string(out);
  return j;
}

struct Reply {
  int status = 0;
  Json body;
};

Reply handle(ck_service* svc, const char* method, const std::string& path, const Json& headers = nullptr,
             const Json& body = nullptr) {
  int status = 0;
  char* out = nullptr;
  const auto hs = headers.is_null() ? std::string() : headers.dump();
  const auto bs = body.is_null() ? std::string() : body.dump();
  REQUIRE(ck_service_handle(svc, method, path.c_str(), headers.is_null() ? nullptr : hs.c_str(), bs.c_str(), &status,
                            &out) == CK_OK);
  Reply r{status, Json::parse(out)};
  ck_free_string(out);
  return r;
}

}  // namespace

TEST_CASE("version and status names") {
  CHECK(std::string(ck_version()) == "0.1.0");
  CHECK(std::string(ck_status_name(CK_OK)) == "ok");
  CHECK(std::string(ck_status_name(CK_CONFLICT)) == "conflict");
  CHECK(std::string(ck_status_name(CK_UNAUTHORIZED)) == "unauthorized");
  char* names = ck_command_names();
  const std::string all(names);
  ck_free_string(names);
  CHECK(all.find("evaluate\n") != std::string::npos);
  CHECK(all.find("synth") != std::string::npos);
}

TEST_CASE("argument and error handling") {
  ck_context* ctx = nullptr;
  CHECK(ck_context_create("{not json", &ctx) == CK_PARSE);
  CHECK(ctx == nullptr);
  CHECK(ck_context_create("[]", &ctx) == CK_INVALID_ARGUMENT);
  CHECK(ck_context_create(nullptr, nullptr) == CK_INVALID_ARGUMENT);

  Context c;
  CHECK(std::string(ck_last_error(c.ctx)).empty());
  char* out = nullptr;
  CHECK(ck_run(c.ctx, "no-such-command", "{}", &out) == CK_INVALID_ARGUMENT);
  CHECK(out == nullptr);
  CHECK_FALSE(std::string(ck_last_error(c.ctx)).empty());
  CHECK(ck_run(c.ctx, "ingest", R"({"transcripts":"/nonexistent/x.jsonl","out_dir":"/tmp"})", &out) == CK_IO);
  CHECK(ck_run(c.ctx, "ingest", "{oops", &out) == CK_PARSE);
  CHECK(ck_run(c.ctx, nullptr, "{}", &out) == CK_INVALID_ARGUMENT);
  double v = 0;
  CHECK(ck_bleu(c.ctx, "a", "", 1, nullptr, &v) == CK_INVALID_ARGUMENT);
  CHECK(ck_bleu(c.ctx, "a", "a", 1, "bpe", &v) == CK_INVALID_ARGUMENT);
  const int bad[2] = {0, 3};
  CHECK(ck_cohen_kappa(c.ctx, bad, bad, 2, nullptr, &v) == CK_INVALID_ARGUMENT);
  ck_free_string(nullptr);
  ck_context_destroy(nullptr);
}

TEST_CASE("metric entry points") {
  Context c;
  double v = 0;
  REQUIRE(ck_bleu(c.ctx, "a b c", "a b d", 1, "whitespace", &v) == CK_OK);
  CHECK(std::abs(v - 2.0 / 3.0) < 1e-12);
  REQUIRE(ck_bleu(c.ctx, "a b", "a b c d", 1, nullptr, &v) == CK_OK);
  CHECK(std::abs(v - std::exp(-1.0)) < 1e-12);
  REQUIRE(ck_rouge_l(c.ctx, "a b c d", "a c b d", nullptr, &v) == CK_OK);
  CHECK(std::abs(v - 0.75) < 1e-12);
  REQUIRE(ck_rouge_l(c.ctx, "你好吗", "你很好", "auto", &v) == CK_OK);
  CHECK(std::abs(v - 2.0 / 3.0) < 1e-12);
  const int a[6] = {0, 0, 1, 1, 2, 2}, b[6] = {0, 0, 1, 2, 2, 2};
  REQUIRE(ck_cohen_kappa(c.ctx, a, b, 6, "nominal", &v) == CK_OK);
  CHECK(std::abs(v - 0.75) < 1e-12);
  double from_c = 0;
  REQUIRE(ck_c_header_kappa(&from_c) == CK_OK);
  CHECK(from_c == v);
}

TEST_CASE("pipeline through the C interface") {
  Dir d;
  Context c(Json{{"seed", 3}}.dump().c_str());
  auto s = run(c.ctx, "synth", {{"kind", "corpus"}, {"n", 60}, {"out_dir", d / "synth"}});
  CHECK(s["episodes"] == 60);
  run(c.ctx, "ingest", {{"transcripts", d / "synth/transcripts.jsonl"}, {"out_dir", d / "ingest"}});
  auto p = run(c.ctx, "pair",
               {{"transcripts", d / "ingest/transcripts.jsonl"}, {"marks", d / "synth/marks.jsonl"}, {"out_dir", d / "pair"}});
  CHECK(p["episodes"] == 60);
  run(c.ctx, "merge-annotations", {{"annotations", d / "synth/annotations.jsonl"}, {"out_dir", d / "merge"}});
  run(c.ctx, "split", {{"gold", d / "merge/gold.jsonl"}, {"k", 3}, {"out_dir", d / "split"}});
  run(c.ctx, "score",
      {{"episodes", d / "pair/episodes.jsonl"},
       {"gold", d / "merge/gold.jsonl"},
       {"backend", "echo-gold"},
       {"out_dir", d / "score"}});
  auto e = run(c.ctx, "evaluate",
               {{"gold", d / "merge/gold.jsonl"},
                {"preds", d / "score/predictions.jsonl"},
                {"folds", d / "split/folds.json"},
                {"label", "oracle"},
                {"out_dir", d / "eval"}});
  CHECK(e["classification_table"].get<std::string>().find("100.00 ± 0.00") != std::string::npos);

  std::ifstream in(d / "eval/resolved_config.json");
  auto resolved = Json::parse(in);
  CHECK(resolved["command"] == "evaluate");
  CHECK(resolved["options"]["seed"] == 3);
}

TEST_CASE("service through the C interface") {
  Dir d;
  Context c;
  run(c.ctx, "synth", {{"kind", "corpus"}, {"n", 20}, {"out_dir", d.path.string()}});
  ck_service* svc = nullptr;
  const auto cfg = Json{{"background_scoring", false}, {"backend", {{"kind", "constant-weak"}}}, {"data_dir", d / "svc"}};
  REQUIRE(ck_service_create(c.ctx, cfg.dump().c_str(), &svc) == CK_OK);
  CHECK(ck_service_add_item_set(svc, "s1", (d / "missing.jsonl").c_str()) == CK_IO);
  CHECK_FALSE(std::string(ck_service_last_error(svc)).empty());
  REQUIRE(ck_service_add_item_set(svc, "s1", (d / "item_set.jsonl").c_str()) == CK_OK);

  auto created = handle(svc, "POST", "/sessions", nullptr,
                        {{"participant_id", "P"}, {"condition", "experimental"}, {"item_set_id", "s1"}});
  REQUIRE(created.status == 201);
  const std::string id = created.body["session_id"];
  const Json auth = {{"Authorization", "Bearer " + created.body["token"].get<std::string>()}};
  CHECK(handle(svc, "GET", "/sessions/" + id + "/next").status == 401);
  for (int i = 0; i < 10; ++i) {
    CHECK(handle(svc, "GET", "/sessions/" + id + "/next", auth).status == 200);
    CHECK(handle(svc, "POST", "/sessions/" + id + "/responses", auth, {{"item_index", i}, {"text", "pre"}}).status == 200);
  }
  auto post = handle(svc, "GET", "/sessions/" + id + "/next", auth);
  CHECK(post.body["phase"] == "post");
  CHECK(post.body["feedback"]["ratings"]["stance_alignment"] == 1);
  ck_service_wait_idle(svc);
  ck_service_destroy(svc);
  CHECK(fs::exists(d.path / "svc" / "events.jsonl"));

  CHECK(ck_service_create(c.ctx, "{\"backend\":{\"kind\":\"bogus\"}}", &svc) == CK_INVALID_ARGUMENT);
}
