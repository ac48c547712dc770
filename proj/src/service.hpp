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
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "error.hpp"
#include "framework.hpp"
#include "scoring.hpp"
#include "study.hpp"

namespace counselkit::service {

using study::Condition;

enum class SessionPhase : std::uint8_t { kPre, kPost, kDone };
std::string_view session_phase_name(SessionPhase p);

inline constexpr int kItems = study::kItemsPerSession;

// Event kinds written to the log.
inline constexpr std::string_view kSessionCreated = "session_created";
inline constexpr std::string_view kItemServed = "item_served";
inline constexpr std::string_view kResponseSubmitted = "response_submitted";
inline constexpr std::string_view kFeedbackDelivered = "feedback_delivered";
inline constexpr std::string_view kPhaseAdvanced = "phase_advanced";
inline constexpr std::string_view kSurveySubmitted = "survey_submitted";

struct EventRecord {
  std::uint64_t seq = 0;
  std::int64_t ts = 0;  // unix milliseconds
  std::string session_id;
  std::string kind;
  Json payload;
  bool operator==(const EventRecord&) const = default;
};

Json event_to_json(const EventRecord& e);
EventRecord event_from_json(const Json& j);

struct Session {
  std::string session_id;
  std::string token;
  std::string participant_id;
  std::string item_set_id;
  Condition condition = Condition::kControl;
  SessionPhase phase = SessionPhase::kPre;
  int cursor = 0;
  bool scoring = false;  // Pre finished, feedback not yet computed
  std::array<std::optional<std::string>, kItems> pre;
  std::array<std::optional<std::string>, kItems> post;
  // Per item: {ratings, explanations} or {error}.
  std::map<int, Json> feedback;
  std::uint64_t items_served = 0;
  std::uint64_t feedback_deliveries = 0;
  std::optional<Json> survey;
};

// State rebuilt purely from events; live operations append an event and
// apply it through the same code path.
class ServiceState {
 public:
  void apply(const EventRecord& e);

  const std::map<std::string, Session>& sessions() const { return sessions_; }
  const Session* find(const std::string& id) const;
  std::uint64_t last_seq() const { return last_seq_; }
  std::size_t session_count() const { return sessions_.size(); }
  // Open = not Done.
  const Session* open_session_for(const std::string& participant_id) const;

  Json to_json() const;
  static ServiceState from_json(const Json& j);

 private:
  std::map<std::string, Session> sessions_;
  std::uint64_t last_seq_ = 0;
};

// Throws kParse on a sequence gap or a malformed record.
ServiceState replay(std::span<const EventRecord> events, ServiceState start = {});

// Permuted blocks of two: every pair of consecutive assignments holds one of
// each condition.
class ConditionRandomizer {
 public:
  explicit ConditionRandomizer(std::uint64_t seed) : rng_(seed) {}
  Condition next();

 private:
  std::mt19937_64 rng_;
  std::array<Condition, 2> block_{};
  int used_ = 2;
};

struct ServiceConfig {
  // events.jsonl and snapshots/ live here; empty keeps everything in memory.
  std::filesystem::path data_dir;
  std::size_t snapshot_every = 200;
  scoring::ScoringOptions scoring;
  bool background_scoring = true;
  std::uint64_t seed = 0;                       // session tokens
  std::optional<std::uint64_t> randomize_seed;  // enables condition assignment when omitted
};

ServiceConfig service_config_from_json(const Json& j);

class ApiError : public Error {
 public:
  ApiError(ErrorCode code, const std::string& message, Json detail = Json::object())
      : Error(code, message), detail_(std::move(detail)) {}
  const Json& detail() const { return detail_; }

 private:
  Json detail_;
};

struct ExportResult {
  std::vector<Json> responses;  // study records, deterministic order
  std::vector<Json> surveys;
  std::vector<Json> failures;
  std::size_t sessions = 0;
};

class StudyService {
 public:
  using NowFn = std::function<std::int64_t()>;

  StudyService(ServiceConfig config, std::shared_ptr<scoring::ChatBackend> backend, NowFn now = {});
  ~StudyService();
  StudyService(const StudyService&) = delete;
  StudyService& operator=(const StudyService&) = delete;

  void add_item_set(const std::string& id, std::vector<Episode> episodes);

  // Results are JSON response bodies. Failures throw ApiError or Error.
  Json create_session(const std::string& participant_id, std::optional<Condition> condition,
                      const std::string& item_set_id);
  Json next_item(const std::string& session_id, const std::string& token);
  Json submit_response(const std::string& session_id, const std::string& token, int item_index,
                       const std::string& text);
  Json status(const std::string& session_id, const std::string& token);
  Json submit_survey(const std::string& session_id, const std::string& token, const Json& answers,
                     const std::string& reflection);
  ExportResult export_study(const std::string& item_set_id);
  // Writes responses.jsonl, surveys.jsonl and failures.json under
  // data_dir/exports/<item_set_id>/ and returns a summary.
  Json export_to_disk(const std::string& item_set_id);

  // Blocks until queued background scoring has finished.
  void wait_idle();

  Json state_json() const;
  std::vector<EventRecord> events() const;
  const ServiceConfig& config() const { return config_; }

 private:
  const Session& authorize(const std::string& session_id, const std::string& token) const;
  EventRecord append(const std::string& session_id, std::string_view kind, Json payload);
  void write_snapshot();
  void recover();
  void enqueue_scoring(const std::string& session_id);
  void run_scoring(const std::string& session_id);
  void worker_loop(std::stop_token st);
  const std::vector<Episode>& item_set(const std::string& id) const;
  Episode response_episode(const Episode& item, const std::string& id, const std::string& text) const;

  ServiceConfig config_;
  std::shared_ptr<scoring::ChatBackend> backend_;
  NowFn now_;
  std::map<std::string, std::vector<Episode>> item_sets_;

  mutable std::mutex mu_;
  ServiceState state_;
  std::vector<EventRecord> log_;
  std::mt19937_64 token_rng_;
  std::optional<ConditionRandomizer> randomizer_;

  std::mutex queue_mu_;
  std::condition_variable_any queue_cv_;
  std::deque<std::string> queue_;
  std::size_t in_flight_ = 0;
  std::condition_variable idle_cv_;
  std::jthread worker_;
};

struct HttpRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> headers;  // lower-case names
  std::string body;
};

struct HttpResponse {
  int status = 200;
  Json body;
};

int http_status_for(ErrorCode code);
// {code, message, detail}
Json error_envelope(ErrorCode code, const std::string& message, const Json& detail = Json::object());

// Pure dispatch over the documented endpoints; never throws.
class Router {
 public:
  explicit Router(StudyService& service) : service_(service) {}
  HttpResponse handle(const HttpRequest& request);

 private:
  StudyService& service_;
};

// Binds the router to an HTTP listener.
class HttpServer {
 public:
  explicit HttpServer(Router& router);
  ~HttpServer();
  // Port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace counselkit::service
