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

#include "scoring.hpp"

#include <atomic>
#include <cstdlib>
#include <random>
#include <thread>

#include "error.hpp"
#include "httplib.h"

namespace counselkit::scoring {

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

PromptOptions prompt_options_for(const ScoringOptions& o) {
  PromptOptions p;
  p.max_context_turns = o.backend.max_context_turns;
  p.target = o.target;
  p.rubric = o.rubric;
  return p;
}

}  // namespace

void BackendConfig::validate() const {
  if (!(decoding.temperature >= 0.0)) fail(ErrorCode::kInvalidArgument, "temperature must be >= 0");
  if (!(decoding.top_p > 0.0 && decoding.top_p <= 1.0)) fail(ErrorCode::kInvalidArgument, "top_p must be in (0, 1]");
  if (decoding.max_tokens < 1) fail(ErrorCode::kInvalidArgument, "max_tokens must be >= 1");
  if (parallelism < 1) fail(ErrorCode::kInvalidArgument, "parallelism must be >= 1");
  if (max_attempts < 1) fail(ErrorCode::kInvalidArgument, "max_attempts must be >= 1");
  if (requests_per_minute < 0.0) fail(ErrorCode::kInvalidArgument, "requests_per_minute must be >= 0");
  if (kind == "http" && endpoint.empty()) fail(ErrorCode::kInvalidArgument, "http backend needs an endpoint");
}

BackendConfig backend_config_from_json(const Json& j) {
  BackendConfig c;
  if (j.is_null()) return c;
  c.kind = j.value("kind", c.kind);
  c.endpoint = j.value("endpoint", c.endpoint);
  c.model = j.value("model", c.model);
  c.auth_env = j.value("auth_env", c.auth_env);
  c.decoding.temperature = j.value("temperature", c.decoding.temperature);
  c.decoding.top_p = j.value("top_p", c.decoding.top_p);
  c.decoding.max_tokens = j.value("max_tokens", c.decoding.max_tokens);
  c.timeout = std::chrono::milliseconds(j.value("timeout_ms", static_cast<long long>(c.timeout.count())));
  c.max_attempts = j.value("max_attempts", c.max_attempts);
  c.parallelism = j.value("parallelism", c.parallelism);
  c.requests_per_minute = j.value("requests_per_minute", c.requests_per_minute);
  c.seed = j.value("seed", c.seed);
  c.max_context_turns = j.value("max_context_turns", c.max_context_turns);
  return c;
}

Json backend_config_to_json(const BackendConfig& c) {
  return {{"kind", c.kind},
          {"endpoint", c.endpoint},
          {"model", c.model},
          {"auth_env", c.auth_env},
          {"temperature", c.decoding.temperature},
          {"top_p", c.decoding.top_p},
          {"max_tokens", c.decoding.max_tokens},
          {"timeout_ms", c.timeout.count()},
          {"max_attempts", c.max_attempts},
          {"parallelism", c.parallelism},
          {"requests_per_minute", c.requests_per_minute},
          {"seed", c.seed},
          {"max_context_turns", c.max_context_turns}};
}

Json chat_request_body(const ChatRequest& request) {
  Json messages = Json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  return {{"model", request.model},
          {"messages", std::move(messages)},
          {"temperature", request.decoding.temperature},
          {"top_p", request.decoding.top_p},
          {"max_tokens", request.decoding.max_tokens}};
}

ChatReply parse_chat_response(const Json& body) {
  ChatReply reply;
  auto text_of = [](const Json& v) -> std::optional<std::string> {
    if (v.is_string()) return v.get<std::string>();
    return std::nullopt;
  };
  std::optional<std::string> text;
  if (body.contains("choices") && body["choices"].is_array() && !body["choices"].empty()) {
    const auto& c = body["choices"][0];
    if (c.contains("message") && c["message"].contains("content")) text = text_of(c["message"]["content"]);
    if (!text && c.contains("text")) text = text_of(c["text"]);
  }
  if (!text && body.contains("content") && body["content"].is_array() && !body["content"].empty()) {
    text = text_of(body["content"][0].value("text", Json()));
  }
  if (!text && body.contains("message") && body["message"].is_object()) {
    text = text_of(body["message"].value("content", Json()));
  }
  if (!text) fail(ErrorCode::kBackend, "backend response carries no generated text");
  reply.text = std::move(*text);
  if (body.contains("usage") && body["usage"].is_object()) {
    const auto& u = body["usage"];
    reply.prompt_tokens = u.value("prompt_tokens", u.value("input_tokens", 0LL));
    reply.completion_tokens = u.value("completion_tokens", u.value("output_tokens", 0LL));
  }
  return reply;
}

HttpChatBackend::HttpChatBackend(BackendConfig config) : config_(std::move(config)) {
  const auto& url = config_.endpoint;
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) fail(ErrorCode::kInvalidArgument, "endpoint must be an http(s) URL: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
  if (!config_.auth_env.empty()) {
    const char* v = std::getenv(config_.auth_env.c_str());
    if (v == nullptr || *v == '\0') {
      fail(ErrorCode::kInvalidArgument, "environment variable " + config_.auth_env + " is not set");
    }
    token_ = v;
  }
}

ChatReply HttpChatBackend::complete(const ChatRequest& request) {
  httplib::Client client(scheme_host_port_);
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  auto usec = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
  client.set_connection_timeout(secs.count(), usec.count());
  client.set_read_timeout(secs.count(), usec.count());
  client.set_write_timeout(secs.count(), usec.count());
  httplib::Headers headers;
  if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
  auto res = client.Post(path_, headers, chat_request_body(request).dump(), "application/json");
  if (!res) fail(ErrorCode::kBackend, "request to " + config_.endpoint + " failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) {
    fail(ErrorCode::kBackend, "backend returned HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
  }
  try {
    return parse_chat_response(Json::parse(res->body));
  } catch (const Json::exception& e) {
    fail(ErrorCode::kBackend, std::string("backend returned invalid JSON: ") + e.what());
  }
}

ChatReply EchoGoldBackend::complete(const ChatRequest& request) {
  auto it = gold_.find(request.episode_id);
  if (it == gold_.end()) fail(ErrorCode::kBackend, "echo-gold has no gold label for '" + request.episode_id + "'");
  return {format_target(it->second.ratings, it->second.explanations, request.target), 0, 0};
}

ChatReply UniformRandomBackend::complete(const ChatRequest& request) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                    static_cast<std::uint32_t>(fnv1a(request.episode_id)),
                    static_cast<std::uint32_t>(fnv1a(request.episode_id) >> 32)};
  std::mt19937_64 rng(seq);
  std::uniform_int_distribution<int> level(0, 2);
  RatingVector rv;
  for (auto m : kMechanisms) rv.set(m, static_cast<Level>(level(rng)));
  ExplanationMap ex;
  if (request.target == TargetMode::kWithExplanations) {
    for (auto m : kMechanisms) {
      ex[m] = {"the client pushes back on the suggestion",
               "the response shows " + std::string(level_name(rv[m])) + " " + std::string(mechanism_display_name(m))};
    }
  }
  return {format_target(rv, ex, request.target), 0, 0};
}

ChatReply ConstantWeakBackend::complete(const ChatRequest& request) {
  ExplanationMap ex;
  if (request.target == TargetMode::kWithExplanations) {
    for (auto m : kMechanisms) {
      ex[m] = {"the client pushes back on the suggestion",
               "the response shows weak " + std::string(mechanism_display_name(m))};
    }
  }
  return {format_target(RatingVector::uniform(Level::kWeak), ex, request.target), 0, 0};
}

std::unique_ptr<ChatBackend> make_backend(const BackendConfig& config, std::map<std::string, GoldLabel> gold) {
  config.validate();
  if (config.kind == "http") return std::make_unique<HttpChatBackend>(config);
  if (config.kind == "echo-gold") return std::make_unique<EchoGoldBackend>(std::move(gold));
  if (config.kind == "uniform-random") return std::make_unique<UniformRandomBackend>(config.seed);
  if (config.kind == "constant-weak") return std::make_unique<ConstantWeakBackend>();
  fail(ErrorCode::kInvalidArgument,
       "unknown backend '" + config.kind + "' (http|echo-gold|uniform-random|constant-weak)");
}

// ---- rate limiting ----

RateLimiter::RateLimiter(double requests_per_minute, double burst, NowFn now, SleepFn sleep)
    : rate_per_sec_(requests_per_minute / 60.0),
      capacity_(std::max(burst, 1.0)),
      tokens_(capacity_),
      now_(now ? std::move(now) : NowFn([] { return Clock::now(); })),
      sleep_(sleep ? std::move(sleep) : SleepFn([](Clock::duration d) { std::this_thread::sleep_for(d); })) {
  last_ = now_();
}

void RateLimiter::acquire() {
  if (rate_per_sec_ <= 0.0) return;
  std::unique_lock lock(mu_);
  for (;;) {
    auto now = now_();
    double elapsed = std::chrono::duration<double>(now - last_).count();
    tokens_ = std::min(capacity_, tokens_ + elapsed * rate_per_sec_);
    last_ = now;
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_per_sec_);
    // Other workers queue on the mutex while this one sleeps.
    sleep_(std::chrono::duration_cast<Clock::duration>(wait) + Clock::duration(1));
  }
}

// ---- scoring ----

Json scored_response_to_json(const ScoredResponse& r) {
  Json missing = Json::array();
  for (auto m : r.missing_explanations) missing.push_back(mechanism_key(m));
  return {{"episode_id", r.episode_id},
          {"ratings", ratings_to_json(r.ratings)},
          {"explanations", explanations_to_json(r.explanations)},
          {"raw_output", r.raw_output},
          {"attempts", r.attempts},
          {"backend", r.backend},
          {"used_fallback", r.used_fallback},
          {"context_truncated", r.context_truncated},
          {"missing_explanations", std::move(missing)}};
}

ScoredResponse scored_response_from_json(const Json& j) {
  ScoredResponse r;
  r.episode_id = j.at("episode_id").get<std::string>();
  r.ratings = ratings_from_json(j.at("ratings"));
  r.explanations = explanations_from_json(j.value("explanations", Json()));
  r.raw_output = j.value("raw_output", "");
  r.attempts = j.value("attempts", 1);
  r.backend = j.value("backend", "");
  r.used_fallback = j.value("used_fallback", false);
  r.context_truncated = j.value("context_truncated", false);
  for (const auto& k : j.value("missing_explanations", std::vector<std::string>{})) {
    if (auto m = mechanism_from_key(k)) r.missing_explanations.push_back(*m);
  }
  if (r.attempts < 1) fail(ErrorCode::kParse, "attempts must be >= 1 for '" + r.episode_id + "'");
  return r;
}

std::string_view failure_kind_name(FailureKind k) { return k == FailureKind::kBackend ? "backend" : "format"; }

ScoredResponse score_episode(const Episode& episode, ChatBackend& backend, const ScoringOptions& options,
                             RateLimiter* limiter, UsageTotals* usage) {
  const auto popts = prompt_options_for(options);
  auto prompt = build_prompt(episode, options.prompt_mode, popts);
  ChatRequest req;
  req.episode_id = episode.episode_id();
  req.model = options.backend.model;
  req.messages = prompt.messages;
  req.decoding = options.backend.decoding;
  req.target = options.target;

  const int max_attempts = std::max(1, options.backend.max_attempts);
  FailureKind last_kind = FailureKind::kBackend;
  std::string last_message;
  std::string last_raw;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    req.attempt = attempt;
    if (limiter) limiter->acquire();
    ChatReply reply;
    try {
      reply = backend.complete(req);
    } catch (const Error& e) {
      last_kind = FailureKind::kBackend;
      last_message = e.what();
      continue;
    }
    if (usage) {
      usage->prompt_tokens += reply.prompt_tokens;
      usage->completion_tokens += reply.completion_tokens;
      usage->requests += 1;
    }
    try {
      auto parsed = parse_model_output(reply.text, options.target);
      ScoredResponse r;
      r.episode_id = episode.episode_id();
      r.ratings = parsed.vector();
      r.explanations = std::move(parsed.explanations);
      r.raw_output = std::move(reply.text);
      r.attempts = attempt;
      r.backend = backend.name();
      r.used_fallback = parsed.used_fallback;
      r.context_truncated = prompt.truncated();
      r.missing_explanations = std::move(parsed.missing_explanations);
      return r;
    } catch (const ParseFailure& pf) {
      last_kind = FailureKind::kFormat;
      last_message = pf.what();
      last_raw = reply.text;
      req.messages.push_back({"assistant", reply.text});
      std::string problems;
      for (const auto& p : pf.problems()) problems += (problems.empty() ? "" : "; ") + p;
      req.messages.push_back({"user", format_correction_message(problems, popts)});
    }
  }
  throw ScoringFailure(last_kind,
                       std::string(last_kind == FailureKind::kFormat ? "format error" : "backend error") + " after " +
                           std::to_string(max_attempts) + " attempts: " + last_message,
                       last_raw, max_attempts);
}

BatchReport score_batch(std::span<const Episode> episodes, ChatBackend& backend, const ScoringOptions& options) {
  if (episodes.empty()) fail(ErrorCode::kInvalidArgument, "empty scoring batch");
  options.backend.validate();
  const auto start = std::chrono::steady_clock::now();

  struct Slot {
    std::optional<ScoredResponse> ok;
    std::optional<BatchFailure> err;
    UsageTotals usage;
  };
  std::vector<Slot> slots(episodes.size());
  RateLimiter limiter(options.backend.requests_per_minute);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= episodes.size()) return;
      auto& slot = slots[i];
      try {
        slot.ok = score_episode(episodes[i], backend, options, &limiter, &slot.usage);
      } catch (const ScoringFailure& f) {
        slot.err = BatchFailure{episodes[i].episode_id(), f.kind(), f.what(), f.raw(), f.attempts()};
      } catch (const std::exception& e) {
        slot.err = BatchFailure{episodes[i].episode_id(), FailureKind::kBackend, e.what(), "", 1};
      }
    }
  };

  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(options.backend.parallelism), episodes.size());
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }

  BatchReport report;
  report.backend = backend.name();
  for (auto& s : slots) {
    if (s.ok) report.successes.push_back(std::move(*s.ok));
    if (s.err) report.failures.push_back(std::move(*s.err));
    report.usage.prompt_tokens += s.usage.prompt_tokens;
    report.usage.completion_tokens += s.usage.completion_tokens;
    report.usage.requests += s.usage.requests;
  }
  report.wall_clock =
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
  return report;
}

Json batch_report_to_json(const BatchReport& r, const ScoringOptions& options, bool include_timing) {
  Json failures = Json::array();
  for (const auto& f : r.failures) {
    failures.push_back({{"episode_id", f.episode_id},
                        {"kind", failure_kind_name(f.kind)},
                        {"message", f.message},
                        {"raw_output", f.raw_output},
                        {"attempts", f.attempts}});
  }
  std::size_t fallback = 0;
  std::size_t retried = 0;
  for (const auto& s : r.successes) {
    fallback += s.used_fallback ? 1 : 0;
    retried += s.attempts > 1 ? 1 : 0;
  }
  Json out = {{"backend", r.backend},
              {"prompt_mode", prompt_mode_name(options.prompt_mode)},
              {"target_mode", target_mode_name(options.target)},
              {"prompt_template_version", kPromptTemplateVersion},
              {"decoding",
               {{"temperature", options.backend.decoding.temperature},
                {"top_p", options.backend.decoding.top_p},
                {"max_tokens", options.backend.decoding.max_tokens}}},
              {"total", r.successes.size() + r.failures.size()},
              {"succeeded", r.successes.size()},
              {"failed", r.failures.size()},
              {"retried", retried},
              {"parsed_with_fallback", fallback},
              {"failures", std::move(failures)},
              {"usage",
               {{"requests", r.usage.requests},
                {"prompt_tokens", r.usage.prompt_tokens},
                {"completion_tokens", r.usage.completion_tokens}}}};
  if (include_timing) out["wall_clock_ms"] = r.wall_clock.count();
  return out;
}

}  // namespace counselkit::scoring
