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

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "framework.hpp"
#include "prompt.hpp"

namespace counselkit::scoring {

struct DecodingConfig {
  double temperature = 0.0;
  double top_p = 1.0;
  int max_tokens = 1024;
};

struct BackendConfig {
  // "http", or one of the stubs: "echo-gold", "uniform-random", "constant-weak".
  std::string kind = "http";
  std::string endpoint;  // e.g. http://127.0.0.1:8000/v1/chat/completions
  std::string model;
  std::string auth_env;  // name of the variable holding the bearer token
  DecodingConfig decoding;
  std::chrono::milliseconds timeout{60000};
  int max_attempts = 3;
  int parallelism = 4;
  double requests_per_minute = 0.0;  // 0 disables rate limiting
  std::uint64_t seed = 0;             // uniform-random stub
  int max_context_turns = 20;

  // Throws Error(kInvalidArgument) on temperature < 0, top_p outside (0, 1],
  // parallelism < 1 or max_attempts < 1.
  void validate() const;
};

BackendConfig backend_config_from_json(const Json& j);
Json backend_config_to_json(const BackendConfig& c);

struct ChatRequest {
  std::string episode_id;  // routing hint for stubs; never sent over the wire
  std::string model;
  std::vector<ChatMessage> messages;
  DecodingConfig decoding;
  TargetMode target = TargetMode::kWithExplanations;
  int attempt = 1;
};

struct ChatReply {
  std::string text;
  long long prompt_tokens = 0;
  long long completion_tokens = 0;
};

// Implementations must be safe to call from several threads at once.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  // Transport problems throw Error(kBackend).
  virtual ChatReply complete(const ChatRequest& request) = 0;
  virtual std::string name() const = 0;
};

// JSON body: {model, messages:[{role, content}], temperature, top_p, max_tokens}.
Json chat_request_body(const ChatRequest& request);
// Accepts OpenAI-style choices[0].message.content / choices[0].text, and
// content[0].text or message.content shapes.
ChatReply parse_chat_response(const Json& body);

class HttpChatBackend final : public ChatBackend {
 public:
  explicit HttpChatBackend(BackendConfig config);
  ChatReply complete(const ChatRequest& request) override;
  std::string name() const override { return config_.model.empty() ? "http" : config_.model; }

 private:
  BackendConfig config_;
  std::string scheme_host_port_;
  std::string path_;
  std::string token_;
};

struct GoldLabel {
  RatingVector ratings;
  ExplanationMap explanations;
};

// Replies with the canonical block for the episode's gold label.
class EchoGoldBackend final : public ChatBackend {
 public:
  explicit EchoGoldBackend(std::map<std::string, GoldLabel> gold) : gold_(std::move(gold)) {}
  ChatReply complete(const ChatRequest& request) override;
  std::string name() const override { return "echo-gold"; }

 private:
  std::map<std::string, GoldLabel> gold_;
};

// Levels drawn uniformly from a stream seeded by (seed, episode_id), so the
// answer for an episode does not depend on scheduling.
class UniformRandomBackend final : public ChatBackend {
 public:
  explicit UniformRandomBackend(std::uint64_t seed) : seed_(seed) {}
  ChatReply complete(const ChatRequest& request) override;
  std::string name() const override { return "uniform-random"; }

 private:
  std::uint64_t seed_;
};

class ConstantWeakBackend final : public ChatBackend {
 public:
  ChatReply complete(const ChatRequest& request) override;
  std::string name() const override { return "constant-weak"; }
};

std::unique_ptr<ChatBackend> make_backend(const BackendConfig& config, std::map<std::string, GoldLabel> gold = {});

// Token bucket shared by all workers of a backend.
class RateLimiter {
 public:
  using Clock = std::chrono::steady_clock;
  using NowFn = std::function<Clock::time_point()>;
  using SleepFn = std::function<void(Clock::duration)>;

  // requests_per_minute <= 0 means unlimited.
  explicit RateLimiter(double requests_per_minute, double burst = 1.0, NowFn now = {}, SleepFn sleep = {});

  void acquire();

 private:
  double rate_per_sec_;
  double capacity_;
  double tokens_;
  Clock::time_point last_;
  NowFn now_;
  SleepFn sleep_;
  std::mutex mu_;
};

struct ScoringOptions {
  PromptMode prompt_mode = PromptMode::kZeroShot;
  TargetMode target = TargetMode::kWithExplanations;
  BackendConfig backend;
  const Rubric* rubric = nullptr;
};

struct ScoredResponse {
  std::string episode_id;
  RatingVector ratings;
  ExplanationMap explanations;
  std::string raw_output;
  int attempts = 1;
  std::string backend;
  bool used_fallback = false;
  bool context_truncated = false;
  std::vector<Mechanism> missing_explanations;

  bool operator==(const ScoredResponse&) const = default;
};

Json scored_response_to_json(const ScoredResponse& r);
ScoredResponse scored_response_from_json(const Json& j);

enum class FailureKind { kBackend, kFormat };

class ScoringFailure : public std::runtime_error {
 public:
  ScoringFailure(FailureKind kind, const std::string& what, std::string raw, int attempts)
      : std::runtime_error(what), kind_(kind), raw_(std::move(raw)), attempts_(attempts) {}
  FailureKind kind() const { return kind_; }
  const std::string& raw() const { return raw_; }
  int attempts() const { return attempts_; }

 private:
  FailureKind kind_;
  std::string raw_;
  int attempts_;
};

struct UsageTotals {
  long long prompt_tokens = 0;
  long long completion_tokens = 0;
  long long requests = 0;
  bool operator==(const UsageTotals&) const = default;
};

// Prompt, call, parse; on a parse failure the reply and a format-correction
// message are appended and the request repeated, up to max_attempts in total.
// Decoding settings are identical on every attempt.
ScoredResponse score_episode(const Episode& episode, ChatBackend& backend, const ScoringOptions& options,
                             RateLimiter* limiter = nullptr, UsageTotals* usage = nullptr);

struct BatchFailure {
  std::string episode_id;
  FailureKind kind;
  std::string message;
  std::string raw_output;
  int attempts = 0;
  bool operator==(const BatchFailure&) const = default;
};

struct BatchReport {
  std::vector<ScoredResponse> successes;  // input order
  std::vector<BatchFailure> failures;     // input order
  UsageTotals usage;
  std::chrono::milliseconds wall_clock{0};
  std::string backend;
};

// Runs at most options.backend.parallelism requests at once. One episode's
// failure never aborts the batch.
BatchReport score_batch(std::span<const Episode> episodes, ChatBackend& backend, const ScoringOptions& options);

// Timing is excluded unless asked for, so stub runs produce identical files.
Json batch_report_to_json(const BatchReport& r, const ScoringOptions& options, bool include_timing = false);

std::string_view failure_kind_name(FailureKind k);

}  // namespace counselkit::scoring
