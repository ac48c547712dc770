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

#include "counselkit/counselkit.h"

#include <cstring>
#include <memory>
#include <mutex>
#include <new>

#include "annotation.hpp"
#include "error.hpp"
#include "framework.hpp"
#include "io.hpp"
#include "metrics.hpp"
#include "pipeline.hpp"
#include "scoring.hpp"
#include "service.hpp"

using counselkit::ErrorCode;
using counselkit::Json;

struct ck_context {
  Json defaults = Json::object();
  std::string last_error;
};

struct ck_service {
  std::unique_ptr<counselkit::service::StudyService> service;
  std::unique_ptr<counselkit::service::Router> router;
  std::unique_ptr<counselkit::service::HttpServer> server;
  std::mutex error_mu;
  std::string last_error;
};

namespace {

char* dup_string(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

Json parse_optional(const char* text, const char* what) {
  if (!text || !*text) return Json::object();
  try {
    auto j = Json::parse(text);
    if (!j.is_object()) counselkit::fail(ErrorCode::kInvalidArgument, std::string(what) + " must be a JSON object");
    return j;
  } catch (const Json::parse_error& e) {
    counselkit::fail(ErrorCode::kParse, std::string(what) + ": " + e.what());
  }
}

// Runs `fn`, translating exceptions into a status and a message.
template <typename Fn>
ck_status guarded(std::string* error, Fn&& fn) {
  try {
    fn();
    if (error) error->clear();
    return CK_OK;
  } catch (const counselkit::Error& e) {
    if (error) *error = e.what();
    return static_cast<ck_status>(static_cast<int>(e.code()));
  } catch (const std::bad_alloc&) {
    if (error) *error = "out of memory";
    return CK_INTERNAL;
  } catch (const std::exception& e) {
    if (error) *error = e.what();
    return CK_INTERNAL;
  } catch (...) {
    if (error) *error = "unknown error";
    return CK_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) counselkit::fail(ErrorCode::kInvalidArgument, std::string(what) + " must not be NULL");
}

counselkit::metrics::Tokenizer tokenizer_arg(const char* name) {
  return counselkit::metrics::tokenizer_from_name(name ? name : "auto");
}

}  // namespace

extern "C" {

const char* ck_version(void) { return counselkit::pipeline::kVersion.data(); }

const char* ck_status_name(ck_status status) {
  if (status == CK_OK) return "ok";
  if (status < CK_INVALID_ARGUMENT || status > CK_UNAUTHORIZED) return "unknown";
  return counselkit::error_code_name(static_cast<ErrorCode>(status)).data();
}

ck_status ck_context_create(const char* config_json, ck_context** out) {
  if (!out) return CK_INVALID_ARGUMENT;
  *out = nullptr;
  return guarded(nullptr, [&] {
    auto ctx = std::make_unique<ck_context>();
    ctx->defaults = parse_optional(config_json, "context config");
    *out = ctx.release();
  });
}

void ck_context_destroy(ck_context* ctx) { delete ctx; }

const char* ck_last_error(const ck_context* ctx) { return ctx ? ctx->last_error.c_str() : ""; }

void ck_free_string(char* s) { std::free(s); }

ck_status ck_run(ck_context* ctx, const char* command, const char* args_json, char** out_json) {
  if (!ctx) return CK_INVALID_ARGUMENT;
  return guarded(&ctx->last_error, [&] {
    require(command && out_json, "command and out_json");
    *out_json = nullptr;
    Json args = ctx->defaults;
    args.update(parse_optional(args_json, "arguments"));
    auto result = counselkit::pipeline::run_command(command, args);
    *out_json = dup_string(result.dump());
  });
}

char* ck_command_names(void) {
  std::string out;
  for (const auto& n : counselkit::pipeline::command_names()) out += n + "\n";
  try {
    return dup_string(out);
  } catch (...) {
    return nullptr;
  }
}

ck_status ck_bleu(ck_context* ctx, const char* candidate, const char* reference, int n, const char* tokenizer,
                  double* out) {
  if (!ctx) return CK_INVALID_ARGUMENT;
  return guarded(&ctx->last_error, [&] {
    require(candidate && reference && out, "candidate, reference and out");
    auto t = tokenizer_arg(tokenizer);
    *out = counselkit::metrics::bleu(counselkit::metrics::tokenize(candidate, t),
                                     counselkit::metrics::tokenize(reference, t), n);
  });
}

ck_status ck_rouge_l(ck_context* ctx, const char* candidate, const char* reference, const char* tokenizer,
                     double* out) {
  if (!ctx) return CK_INVALID_ARGUMENT;
  return guarded(&ctx->last_error, [&] {
    require(candidate && reference && out, "candidate, reference and out");
    auto t = tokenizer_arg(tokenizer);
    *out = counselkit::metrics::rouge_l(counselkit::metrics::tokenize(candidate, t),
                                        counselkit::metrics::tokenize(reference, t));
  });
}

ck_status ck_cohen_kappa(ck_context* ctx, const int* a, const int* b, size_t n, const char* weighting, double* out) {
  if (!ctx) return CK_INVALID_ARGUMENT;
  return guarded(&ctx->last_error, [&] {
    require(out && (n == 0 || (a && b)), "a, b and out");
    std::vector<counselkit::Level> la, lb;
    for (size_t i = 0; i < n; ++i) {
      la.push_back(counselkit::level_from_ordinal(a[i]));
      lb.push_back(counselkit::level_from_ordinal(b[i]));
    }
    const std::string w = weighting ? weighting : "nominal";
    if (w != "nominal" && w != "linear") counselkit::fail(ErrorCode::kInvalidArgument, "weighting must be nominal or linear");
    *out = counselkit::annotation::cohen_kappa(la, lb,
                                               w == "linear" ? counselkit::annotation::KappaWeighting::kLinear
                                                             : counselkit::annotation::KappaWeighting::kNominal)
               .kappa;
  });
}

ck_status ck_service_create(ck_context* ctx, const char* config_json, ck_service** out) {
  if (!ctx) return CK_INVALID_ARGUMENT;
  return guarded(&ctx->last_error, [&] {
    require(out, "out");
    *out = nullptr;
    auto config = counselkit::service::service_config_from_json(parse_optional(config_json, "service config"));
    config.scoring.backend.validate();
    std::shared_ptr<counselkit::scoring::ChatBackend> backend = counselkit::scoring::make_backend(config.scoring.backend);
    auto svc = std::make_unique<ck_service>();
    svc->service = std::make_unique<counselkit::service::StudyService>(std::move(config), std::move(backend));
    svc->router = std::make_unique<counselkit::service::Router>(*svc->service);
    *out = svc.release();
  });
}

void ck_service_destroy(ck_service* svc) {
  if (!svc) return;
  if (svc->server) svc->server->stop();
  svc->server.reset();
  svc->router.reset();
  svc->service.reset();
  delete svc;
}

const char* ck_service_last_error(const ck_service* svc) { return svc ? svc->last_error.c_str() : ""; }

ck_status ck_service_add_item_set(ck_service* svc, const char* item_set_id, const char* episodes_path) {
  if (!svc) return CK_INVALID_ARGUMENT;
  std::lock_guard lock(svc->error_mu);
  return guarded(&svc->last_error, [&] {
    require(item_set_id && episodes_path, "item_set_id and episodes_path");
    std::vector<counselkit::Episode> episodes;
    for (const auto& j : counselkit::io::read_jsonl(episodes_path)) episodes.push_back(counselkit::episode_from_json(j));
    svc->service->add_item_set(item_set_id, std::move(episodes));
  });
}

ck_status ck_service_handle(ck_service* svc, const char* method, const char* path, const char* headers_json,
                            const char* body, int* out_status, char** out_body) {
  if (!svc) return CK_INVALID_ARGUMENT;
  std::string error;
  auto status = guarded(&error, [&] {
    require(method && path && out_status && out_body, "method, path, out_status and out_body");
    counselkit::service::HttpRequest req;
    req.method = method;
    req.path = path;
    req.body = body ? body : "";
    const auto headers = parse_optional(headers_json, "headers");
    for (const auto& [k, v] : headers.items()) {
      std::string name = k;
      for (auto& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      req.headers[name] = v.is_string() ? v.get<std::string>() : v.dump();
    }
    auto res = svc->router->handle(req);
    *out_status = res.status;
    *out_body = dup_string(res.body.dump());
  });
  std::lock_guard lock(svc->error_mu);
  svc->last_error = error;
  return status;
}

ck_status ck_service_bind(ck_service* svc, const char* host, int port, int* out_port) {
  if (!svc) return CK_INVALID_ARGUMENT;
  std::lock_guard lock(svc->error_mu);
  return guarded(&svc->last_error, [&] {
    require(host && out_port, "host and out_port");
    if (!svc->server) svc->server = std::make_unique<counselkit::service::HttpServer>(*svc->router);
    *out_port = svc->server->bind(host, port);
  });
}

ck_status ck_service_listen(ck_service* svc) {
  if (!svc) return CK_INVALID_ARGUMENT;
  std::string error;
  auto status = guarded(&error, [&] {
    if (!svc->server) counselkit::fail(ErrorCode::kInvalidArgument, "call ck_service_bind first");
    svc->server->listen();
  });
  std::lock_guard lock(svc->error_mu);
  svc->last_error = error;
  return status;
}

void ck_service_stop(ck_service* svc) {
  if (svc && svc->server) svc->server->stop();
}

void ck_service_wait_idle(ck_service* svc) {
  if (svc && svc->service) svc->service->wait_idle();
}

}  // extern "C"
