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

#include "service.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>

#include <fmt/format.h>
#include <httplib.h>

#include "io.hpp"

namespace counselkit::service {

std::string_view session_phase_name(SessionPhase p) {
  switch (p) {
    case SessionPhase::kPre: return "pre";
    case SessionPhase::kPost: return "post";
    case SessionPhase::kDone: return "done";
  }
  return "pre";
}

namespace {

SessionPhase session_phase_from_name(std::string_view s) {
  if (s == "pre") return SessionPhase::kPre;
  if (s == "post") return SessionPhase::kPost;
  if (s == "done") return SessionPhase::kDone;
  fail(ErrorCode::kParse, "unknown session phase '" + std::string(s) + "'");
}

Json optional_texts(const std::array<std::optional<std::string>, kItems>& a) {
  Json out = Json::array();
  for (const auto& t : a) out.push_back(t ? Json(*t) : Json(nullptr));
  return out;
}

void read_texts(const Json& j, std::array<std::optional<std::string>, kItems>& a) {
  for (std::size_t i = 0; i < a.size() && i < j.size(); ++i) {
    if (!j[i].is_null()) a[i] = j[i].get<std::string>();
  }
}

std::string state_name(const Session& s) {
  if (s.phase == SessionPhase::kDone) return "done";
  if (s.scoring) return "scoring";
  return "in_progress";
}

}  // namespace

Json event_to_json(const EventRecord& e) {
  return {{"seq", e.seq}, {"ts", e.ts}, {"session_id", e.session_id}, {"kind", e.kind}, {"payload", e.payload}};
}

EventRecord event_from_json(const Json& j) {
  EventRecord e;
  e.seq = j.at("seq").get<std::uint64_t>();
  e.ts = j.at("ts").get<std::int64_t>();
  e.session_id = j.at("session_id").get<std::string>();
  e.kind = j.at("kind").get<std::string>();
  e.payload = j.value("payload", Json::object());
  return e;
}

// ---- state ----

const Session* ServiceState::find(const std::string& id) const {
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : &it->second;
}

const Session* ServiceState::open_session_for(const std::string& participant_id) const {
  for (const auto& [id, s] : sessions_) {
    if (s.participant_id == participant_id && s.phase != SessionPhase::kDone) return &s;
  }
  return nullptr;
}

void ServiceState::apply(const EventRecord& e) {
  if (e.seq != last_seq_ + 1) {
    fail(ErrorCode::kParse, fmt::format("event sequence gap: expected {}, found {}", last_seq_ + 1, e.seq));
  }
  const auto& p = e.payload;
  if (e.kind == kSessionCreated) {
    if (sessions_.count(e.session_id)) fail(ErrorCode::kParse, "session '" + e.session_id + "' created twice");
    Session s;
    s.session_id = e.session_id;
    s.token = p.at("token").get<std::string>();
    s.participant_id = p.at("participant_id").get<std::string>();
    s.item_set_id = p.at("item_set_id").get<std::string>();
    s.condition = study::condition_from_name(p.at("condition").get<std::string>());
    sessions_.emplace(e.session_id, std::move(s));
  } else {
    auto it = sessions_.find(e.session_id);
    if (it == sessions_.end()) fail(ErrorCode::kParse, "event for unknown session '" + e.session_id + "'");
    auto& s = it->second;
    if (e.kind == kItemServed) {
      ++s.items_served;
    } else if (e.kind == kFeedbackDelivered) {
      ++s.feedback_deliveries;
    } else if (e.kind == kResponseSubmitted) {
      const int idx = p.at("item_index").get<int>();
      if (idx != s.cursor || s.phase == SessionPhase::kDone || s.scoring) {
        fail(ErrorCode::kParse, fmt::format("response event out of order for '{}' (item {})", e.session_id, idx));
      }
      auto& slot = s.phase == SessionPhase::kPre ? s.pre : s.post;
      slot[static_cast<std::size_t>(idx)] = p.at("text").get<std::string>();
      ++s.cursor;
      if (s.cursor == kItems) {
        if (s.phase == SessionPhase::kPre) {
          s.scoring = true;
        } else {
          s.phase = SessionPhase::kDone;
        }
      }
    } else if (e.kind == kPhaseAdvanced) {
      if (!s.scoring) fail(ErrorCode::kParse, "phase_advanced for '" + e.session_id + "' without finished pre phase");
      s.scoring = false;
      s.phase = SessionPhase::kPost;
      s.cursor = 0;
      const auto& fb = p.at("feedback");
      for (std::size_t i = 0; i < fb.size(); ++i) s.feedback[static_cast<int>(i)] = fb[i];
    } else if (e.kind == kSurveySubmitted) {
      s.survey = p;
    } else {
      fail(ErrorCode::kParse, "unknown event kind '" + e.kind + "'");
    }
  }
  last_seq_ = e.seq;
}

Json ServiceState::to_json() const {
  Json sessions = Json::array();
  for (const auto& [id, s] : sessions_) {
    Json fb = Json::object();
    for (const auto& [k, v] : s.feedback) fb[std::to_string(k)] = v;
    sessions.push_back({{"session_id", s.session_id},
                        {"token", s.token},
                        {"participant_id", s.participant_id},
                        {"item_set_id", s.item_set_id},
                        {"condition", study::condition_name(s.condition)},
                        {"phase", session_phase_name(s.phase)},
                        {"cursor", s.cursor},
                        {"scoring", s.scoring},
                        {"pre", optional_texts(s.pre)},
                        {"post", optional_texts(s.post)},
                        {"feedback", std::move(fb)},
                        {"items_served", s.items_served},
                        {"feedback_deliveries", s.feedback_deliveries},
                        {"survey", s.survey ? *s.survey : Json(nullptr)}});
  }
  return {{"last_seq", last_seq_}, {"sessions", std::move(sessions)}};
}

ServiceState ServiceState::from_json(const Json& j) {
  ServiceState st;
  st.last_seq_ = j.at("last_seq").get<std::uint64_t>();
  for (const auto& js : j.at("sessions")) {
    Session s;
    s.session_id = js.at("session_id").get<std::string>();
    s.token = js.at("token").get<std::string>();
    s.participant_id = js.at("participant_id").get<std::string>();
    s.item_set_id = js.at("item_set_id").get<std::string>();
    s.condition = study::condition_from_name(js.at("condition").get<std::string>());
    s.phase = session_phase_from_name(js.at("phase").get<std::string>());
    s.cursor = js.at("cursor").get<int>();
    s.scoring = js.at("scoring").get<bool>();
    read_texts(js.at("pre"), s.pre);
    read_texts(js.at("post"), s.post);
    for (const auto& [k, v] : js.at("feedback").items()) s.feedback[std::stoi(k)] = v;
    s.items_served = js.at("items_served").get<std::uint64_t>();
    s.feedback_deliveries = js.at("feedback_deliveries").get<std::uint64_t>();
    if (!js.at("survey").is_null()) s.survey = js.at("survey");
    st.sessions_.emplace(s.session_id, std::move(s));
  }
  return st;
}

ServiceState replay(std::span<const EventRecord> events, ServiceState start) {
  for (const auto& e : events) {
    if (e.seq <= start.last_seq()) continue;
    start.apply(e);
  }
  return start;
}

Condition ConditionRandomizer::next() {
  if (used_ == 2) {
    block_ = {Condition::kControl, Condition::kExperimental};
    std::shuffle(block_.begin(), block_.end(), rng_);
    used_ = 0;
  }
  return block_[static_cast<std::size_t>(used_++)];
}

ServiceConfig service_config_from_json(const Json& j) {
  ServiceConfig c;
  if (j.is_null()) return c;
  c.data_dir = j.value("data_dir", std::string());
  c.snapshot_every = j.value("snapshot_every", c.snapshot_every);
  c.background_scoring = j.value("background_scoring", c.background_scoring);
  c.seed = j.value("seed", c.seed);
  if (j.contains("randomize_seed") && !j.at("randomize_seed").is_null()) {
    c.randomize_seed = j.at("randomize_seed").get<std::uint64_t>();
  }
  c.scoring.prompt_mode = scoring::prompt_mode_from_name(j.value("prompt_mode", std::string("zero-shot")));
  c.scoring.target = scoring::target_mode_from_name(j.value("target", std::string("with_explanations")));
  c.scoring.backend = scoring::backend_config_from_json(j.value("backend", Json()));
  return c;
}

// ---- service ----

StudyService::StudyService(ServiceConfig config, std::shared_ptr<scoring::ChatBackend> backend, NowFn now)
    : config_(std::move(config)), backend_(std::move(backend)), now_(std::move(now)), token_rng_(config_.seed) {
  if (!backend_) fail(ErrorCode::kInvalidArgument, "study service needs a scoring backend");
  if (!now_) {
    now_ = [] {
      return std::chrono::duration_cast<std::chrono::milliseconds>(
                 std::chrono::system_clock::now().time_since_epoch())
          .count();
    };
  }
  if (config_.randomize_seed) randomizer_.emplace(*config_.randomize_seed);
  if (!config_.data_dir.empty()) recover();
  if (config_.background_scoring) worker_ = std::jthread([this](std::stop_token st) { worker_loop(st); });
}

StudyService::~StudyService() {
  if (worker_.joinable()) {
    worker_.request_stop();
    queue_cv_.notify_all();
  }
}

void StudyService::recover() {
  std::filesystem::create_directories(config_.data_dir / "snapshots");
  const auto log_path = config_.data_dir / "events.jsonl";
  if (!std::filesystem::exists(log_path)) return;
  auto contents = io::parse_jsonl(io::read_file(log_path));
  if (!contents.skipped.empty()) {
    fail(ErrorCode::kParse, fmt::format("{}:{}: {}", log_path.string(), contents.skipped.front().line_number,
                                        contents.skipped.front().reason));
  }
  for (const auto& line : contents.lines) log_.push_back(event_from_json(line.value));
  for (std::size_t i = 0; i < log_.size(); ++i) {
    if (log_[i].seq != i + 1) {
      fail(ErrorCode::kParse, fmt::format("{}: sequence gap at line {} (seq {})", log_path.string(), i + 1, log_[i].seq));
    }
  }
  ServiceState start;
  std::uint64_t best = 0;
  std::filesystem::path best_path;
  for (const auto& entry : std::filesystem::directory_iterator(config_.data_dir / "snapshots")) {
    if (entry.path().extension() != ".json") continue;
    auto doc = io::read_json(entry.path());
    auto seq = doc.at("last_seq").get<std::uint64_t>();
    if (seq > best && seq <= log_.size()) {
      best = seq;
      best_path = entry.path();
    }
  }
  if (best > 0) start = ServiceState::from_json(io::read_json(best_path));
  state_ = replay(log_, std::move(start));
  token_rng_.discard(2 * state_.session_count());
  if (randomizer_) {
    for (std::size_t i = 0; i < state_.session_count(); ++i) randomizer_->next();
  }
}

void StudyService::add_item_set(const std::string& id, std::vector<Episode> episodes) {
  if (id.empty()) fail(ErrorCode::kInvalidArgument, "item set id must not be empty");
  std::vector<std::string> pending;
  {
    std::lock_guard lock(mu_);
    item_sets_[id] = std::move(episodes);
    for (const auto& [sid, s] : state_.sessions()) {
      if (s.item_set_id == id && s.scoring) pending.push_back(sid);
    }
  }
  for (const auto& sid : pending) enqueue_scoring(sid);
}

const std::vector<Episode>& StudyService::item_set(const std::string& id) const {
  auto it = item_sets_.find(id);
  if (it == item_sets_.end()) throw ApiError(ErrorCode::kNotFound, "unknown item set '" + id + "'", {{"item_set_id", id}});
  return it->second;
}

EventRecord StudyService::append(const std::string& session_id, std::string_view kind, Json payload) {
  EventRecord e{state_.last_seq() + 1, now_(), session_id, std::string(kind), std::move(payload)};
  if (!config_.data_dir.empty()) {
    std::ofstream out(config_.data_dir / "events.jsonl", std::ios::app | std::ios::binary);
    out << event_to_json(e).dump() << '\n';
    out.flush();
    if (!out) fail(ErrorCode::kIo, "cannot append to event log in " + config_.data_dir.string());
  }
  state_.apply(e);
  log_.push_back(e);
  if (!config_.data_dir.empty() && config_.snapshot_every > 0 && e.seq % config_.snapshot_every == 0) write_snapshot();
  return e;
}

void StudyService::write_snapshot() {
  const auto path = config_.data_dir / "snapshots" / fmt::format("snapshot-{:010d}.json", state_.last_seq());
  std::filesystem::create_directories(path.parent_path());
  io::write_json(path, state_.to_json());
}

const Session& StudyService::authorize(const std::string& session_id, const std::string& token) const {
  const auto* s = state_.find(session_id);
  if (!s) throw ApiError(ErrorCode::kNotFound, "unknown session '" + session_id + "'", {{"session_id", session_id}});
  if (token != s->token) throw ApiError(ErrorCode::kUnauthorized, "missing or invalid session token");
  return *s;
}

Json StudyService::create_session(const std::string& participant_id, std::optional<Condition> condition,
                                  const std::string& item_set_id) {
  std::lock_guard lock(mu_);
  if (trim(participant_id).empty()) throw ApiError(ErrorCode::kInvalidArgument, "participant_id must not be empty");
  const auto& items = item_set(item_set_id);
  if (items.size() != static_cast<std::size_t>(kItems)) {
    throw ApiError(ErrorCode::kInvalidArgument,
                   fmt::format("item set '{}' has {} episodes; exactly {} are required", item_set_id, items.size(),
                               kItems),
                   {{"item_set_id", item_set_id}, {"episodes", items.size()}});
  }
  if (const auto* open = state_.open_session_for(participant_id)) {
    throw ApiError(ErrorCode::kConflict, "participant '" + participant_id + "' already has an open session",
                   {{"session_id", open->session_id}});
  }
  if (!condition) {
    if (!randomizer_) throw ApiError(ErrorCode::kInvalidArgument, "condition is required (no randomizer configured)");
    condition = randomizer_->next();
  }
  const auto token = fmt::format("{:016x}{:016x}", token_rng_(), token_rng_());
  const auto id = fmt::format("s{:05d}", state_.session_count() + 1);
  append(id, kSessionCreated,
         {{"participant_id", participant_id},
          {"condition", study::condition_name(*condition)},
          {"item_set_id", item_set_id},
          {"token", token}});
  const auto& s = *state_.find(id);
  return {{"session_id", s.session_id},
          {"token", s.token},
          {"participant_id", s.participant_id},
          {"condition", study::condition_name(s.condition)},
          {"item_set_id", s.item_set_id},
          {"phase", session_phase_name(s.phase)},
          {"cursor", s.cursor},
          {"total", kItems}};
}

namespace {

Json status_body(const Session& s) {
  return {{"session_id", s.session_id},
          {"participant_id", s.participant_id},
          {"condition", study::condition_name(s.condition)},
          {"phase", session_phase_name(s.phase)},
          {"state", state_name(s)},
          {"cursor", s.cursor},
          {"total", kItems},
          {"survey_submitted", s.survey.has_value()}};
}

void require_active(const Session& s) {
  if (s.phase == SessionPhase::kDone) {
    throw ApiError(ErrorCode::kGone, "session is finished", {{"session_id", s.session_id}, {"state", "done"}});
  }
  if (s.scoring) {
    throw ApiError(ErrorCode::kConflict, "pre-phase responses are being scored; retry shortly",
                   {{"session_id", s.session_id}, {"state", "scoring"}});
  }
}

}  // namespace

Json StudyService::next_item(const std::string& session_id, const std::string& token) {
  std::lock_guard lock(mu_);
  const auto& s = authorize(session_id, token);
  require_active(s);
  const auto idx = s.cursor;
  const auto& item = item_set(s.item_set_id).at(static_cast<std::size_t>(idx));
  Json context = Json::array();
  for (const auto& t : item.context()) context.push_back(turn_to_json(t));
  Json body = {{"session_id", s.session_id},
               {"phase", session_phase_name(s.phase)},
               {"item_index", idx},
               {"item_id", idx + 1},
               {"total", kItems},
               {"episode", {{"episode_id", item.episode_id()}, {"context", std::move(context)}}}};
  bool delivered = false;
  if (s.phase == SessionPhase::kPost) {
    body["pre_response"] = s.pre[static_cast<std::size_t>(idx)].value_or("");
    if (s.condition == Condition::kExperimental) {
      auto it = s.feedback.find(idx);
      if (it == s.feedback.end() || it->second.contains("error")) {
        body["feedback_error"] = it == s.feedback.end() ? "no feedback recorded" : it->second.at("error");
      } else {
        const auto ratings = ratings_from_json(it->second.at("ratings"));
        Json excerpts = Json::array();
        for (auto m : kMechanisms) {
          const auto& entry = config_.scoring.rubric ? config_.scoring.rubric->lookup(m, ratings[m])
                                                     : rubric_lookup(m, ratings[m]);
          excerpts.push_back({{"mechanism", mechanism_key(m)},
                              {"level", level_name(entry.level)},
                              {"definition", entry.definition}});
        }
        body["feedback"] = {{"ratings", it->second.at("ratings")},
                            {"explanations", it->second.value("explanations", Json::object())},
                            {"rubric_excerpts", std::move(excerpts)}};
        delivered = true;
      }
    }
  }
  const std::string phase(session_phase_name(s.phase));
  append(session_id, kItemServed, {{"item_index", idx}, {"phase", phase}});
  if (delivered) append(session_id, kFeedbackDelivered, {{"item_index", idx}});
  return body;
}

Json StudyService::submit_response(const std::string& session_id, const std::string& token, int item_index,
                                   const std::string& text) {
  bool start_scoring = false;
  {
    std::lock_guard lock(mu_);
    const auto& s = authorize(session_id, token);
    require_active(s);
    if (item_index != s.cursor) {
      throw ApiError(ErrorCode::kConflict,
                     fmt::format("item {} submitted while the session expects item {}", item_index, s.cursor),
                     {{"expected", s.cursor}, {"got", item_index}, {"phase", session_phase_name(s.phase)}});
    }
    if (trim(text).empty()) throw ApiError(ErrorCode::kInvalidArgument, "response text must not be empty");
    append(session_id, kResponseSubmitted,
           {{"item_index", item_index}, {"phase", session_phase_name(s.phase)}, {"text", text}});
    start_scoring = state_.find(session_id)->scoring;
  }
  if (start_scoring) {
    if (config_.background_scoring) {
      enqueue_scoring(session_id);
    } else {
      run_scoring(session_id);
    }
  }
  std::lock_guard lock(mu_);
  Json ack = status_body(*state_.find(session_id));
  ack["accepted"] = true;
  ack["item_index"] = item_index;
  return ack;
}

Json StudyService::status(const std::string& session_id, const std::string& token) {
  std::lock_guard lock(mu_);
  return status_body(authorize(session_id, token));
}

Json StudyService::submit_survey(const std::string& session_id, const std::string& token, const Json& answers,
                                 const std::string& reflection) {
  std::lock_guard lock(mu_);
  const auto& s = authorize(session_id, token);
  if (s.phase != SessionPhase::kDone) {
    throw ApiError(ErrorCode::kConflict, "the survey opens after the post phase", {{"state", state_name(s)}});
  }
  if (s.survey) throw ApiError(ErrorCode::kConflict, "survey already submitted", {{"session_id", session_id}});
  study::LikertSurvey parsed;
  try {
    parsed = study::likert_from_json({{"participant_id", s.participant_id}, {"answers", answers}});
  } catch (const Error& e) {
    throw ApiError(ErrorCode::kInvalidArgument, e.what());
  } catch (const Json::exception& e) {
    throw ApiError(ErrorCode::kInvalidArgument, std::string("malformed survey answers: ") + e.what());
  }
  if (parsed.answers.empty()) throw ApiError(ErrorCode::kInvalidArgument, "survey has no answers");
  append(session_id, kSurveySubmitted, {{"answers", parsed.answers}, {"reflection", reflection}});
  return {{"accepted", true}, {"session_id", session_id}};
}

Episode StudyService::response_episode(const Episode& item, const std::string& id, const std::string& text) const {
  Turn response{Speaker::kCounselor, text, item.context().back().index + 1};
  return Episode::create(id, item.context(), std::move(response), item.source_transcript_id());
}

void StudyService::enqueue_scoring(const std::string& session_id) {
  if (!config_.background_scoring) {
    run_scoring(session_id);
    return;
  }
  {
    std::lock_guard lock(queue_mu_);
    if (std::find(queue_.begin(), queue_.end(), session_id) != queue_.end()) return;
    queue_.push_back(session_id);
  }
  queue_cv_.notify_one();
}

void StudyService::worker_loop(std::stop_token st) {
  for (;;) {
    std::string sid;
    {
      std::unique_lock lock(queue_mu_);
      if (!queue_cv_.wait(lock, st, [&] { return !queue_.empty(); })) return;
      sid = std::move(queue_.front());
      queue_.pop_front();
      ++in_flight_;
    }
    try {
      run_scoring(sid);
    } catch (...) {
    }
    {
      std::lock_guard lock(queue_mu_);
      --in_flight_;
    }
    idle_cv_.notify_all();
  }
}

void StudyService::wait_idle() {
  std::unique_lock lock(queue_mu_);
  idle_cv_.wait(lock, [&] { return queue_.empty() && in_flight_ == 0; });
}

void StudyService::run_scoring(const std::string& session_id) {
  std::vector<Episode> episodes;
  {
    std::lock_guard lock(mu_);
    const auto* s = state_.find(session_id);
    if (!s || !s->scoring) return;
    const auto& items = item_set(s->item_set_id);
    for (int i = 0; i < kItems; ++i) {
      episodes.push_back(response_episode(items.at(static_cast<std::size_t>(i)),
                                          fmt::format("{}/pre/{}", session_id, i + 1),
                                          *s->pre[static_cast<std::size_t>(i)]));
    }
  }
  Json feedback = Json::array();
  try {
    auto report = scoring::score_batch(episodes, *backend_, config_.scoring);
    std::map<std::string, Json> by_id;
    for (const auto& r : report.successes) {
      by_id[r.episode_id] = {{"ratings", ratings_to_json(r.ratings)},
                             {"explanations", explanations_to_json(r.explanations)}};
    }
    for (const auto& f : report.failures) by_id[f.episode_id] = {{"error", f.message}};
    for (const auto& e : episodes) feedback.push_back(by_id.at(e.episode_id()));
  } catch (const std::exception& e) {
    feedback = Json::array();
    for (std::size_t i = 0; i < episodes.size(); ++i) feedback.push_back({{"error", e.what()}});
  }
  std::lock_guard lock(mu_);
  const auto* s = state_.find(session_id);
  if (!s || !s->scoring) return;
  append(session_id, kPhaseAdvanced, {{"from", "pre"}, {"to", "post"}, {"feedback", std::move(feedback)}});
}

ExportResult StudyService::export_study(const std::string& item_set_id) {
  struct Row {
    std::string participant_id;
    Condition condition;
    study::Phase phase;
    int item_id;
    std::string text;
    std::string episode_id;
  };
  std::vector<Row> rows;
  std::vector<Episode> episodes;
  ExportResult out;
  {
    std::lock_guard lock(mu_);
    const auto& items = item_set(item_set_id);
    std::map<std::string, const Session*> latest;
    for (const auto& [id, s] : state_.sessions()) {
      if (s.item_set_id == item_set_id && s.phase == SessionPhase::kDone) latest[s.participant_id] = &s;
    }
    if (latest.empty()) {
      throw ApiError(ErrorCode::kConflict, "item set '" + item_set_id + "' has no completed sessions",
                     {{"item_set_id", item_set_id}});
    }
    out.sessions = latest.size();
    for (const auto& [pid, s] : latest) {
      for (auto phase : {study::Phase::kPre, study::Phase::kPost}) {
        const auto& texts = phase == study::Phase::kPre ? s->pre : s->post;
        for (int i = 0; i < kItems; ++i) {
          Row r{pid, s->condition, phase, i + 1, *texts[static_cast<std::size_t>(i)],
                fmt::format("{}/{}/{}", pid, study::phase_name(phase), i + 1)};
          episodes.push_back(response_episode(items.at(static_cast<std::size_t>(i)), r.episode_id, r.text));
          rows.push_back(std::move(r));
        }
      }
      if (s->survey) {
        out.surveys.push_back({{"participant_id", pid},
                               {"condition", study::condition_name(s->condition)},
                               {"session_id", s->session_id},
                               {"answers", s->survey->at("answers")},
                               {"reflection", s->survey->value("reflection", "")}});
      }
    }
  }
  auto report = scoring::score_batch(episodes, *backend_, config_.scoring);
  std::map<std::string, const scoring::ScoredResponse*> ok;
  for (const auto& r : report.successes) ok[r.episode_id] = &r;
  std::map<std::string, const scoring::BatchFailure*> bad;
  for (const auto& f : report.failures) bad[f.episode_id] = &f;
  for (const auto& r : rows) {
    if (auto it = ok.find(r.episode_id); it != ok.end()) {
      study::TrialResponse t{r.participant_id, r.item_id, r.phase, r.text, it->second->ratings};
      out.responses.push_back(study::trial_to_json(t, r.condition));
    } else {
      const auto* f = bad.at(r.episode_id);
      out.failures.push_back({{"participant_id", r.participant_id},
                              {"condition", study::condition_name(r.condition)},
                              {"item_id", r.item_id},
                              {"phase", study::phase_name(r.phase)},
                              {"kind", scoring::failure_kind_name(f->kind)},
                              {"message", f->message},
                              {"attempts", f->attempts}});
    }
  }
  return out;
}

Json StudyService::export_to_disk(const std::string& item_set_id) {
  auto result = export_study(item_set_id);
  Json summary = {{"item_set_id", item_set_id},
                  {"sessions", result.sessions},
                  {"responses", result.responses.size()},
                  {"surveys", result.surveys.size()},
                  {"failures", result.failures}};
  if (config_.data_dir.empty()) {
    summary["records"] = result.responses;
    summary["survey_records"] = result.surveys;
    return summary;
  }
  const auto dir = config_.data_dir / "exports" / item_set_id;
  std::filesystem::create_directories(dir);
  io::write_jsonl(dir / "responses.jsonl", result.responses);
  io::write_jsonl(dir / "surveys.jsonl", result.surveys);
  io::write_json(dir / "failures.json", {{"item_set_id", item_set_id}, {"failures", result.failures}});
  summary["files"] = {{"responses", (dir / "responses.jsonl").string()},
                      {"surveys", (dir / "surveys.jsonl").string()},
                      {"failures", (dir / "failures.json").string()}};
  return summary;
}

Json StudyService::state_json() const {
  std::lock_guard lock(mu_);
  return state_.to_json();
}

std::vector<EventRecord> StudyService::events() const {
  std::lock_guard lock(mu_);
  return log_;
}

// ---- HTTP ----

int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kParse: return 400;
    case ErrorCode::kUnauthorized: return 401;
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kConflict: return 409;
    case ErrorCode::kGone: return 410;
    case ErrorCode::kBackend: return 502;
    case ErrorCode::kIo:
    case ErrorCode::kNumeric:
    case ErrorCode::kInternal: return 500;
  }
  return 500;
}

Json error_envelope(ErrorCode code, const std::string& message, const Json& detail) {
  return {{"code", error_code_name(code)}, {"message", message}, {"detail", detail}};
}

namespace {

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::string cur;
  const auto end = path.find('?');
  for (char c : path.substr(0, end)) {
    if (c == '/') {
      if (!cur.empty()) parts.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) parts.push_back(std::move(cur));
  return parts;
}

std::string bearer_token(const HttpRequest& r) {
  if (auto it = r.headers.find("authorization"); it != r.headers.end()) {
    constexpr std::string_view kPrefix = "Bearer ";
    if (it->second.rfind(kPrefix, 0) == 0) return it->second.substr(kPrefix.size());
  }
  if (auto it = r.headers.find("x-session-token"); it != r.headers.end()) return it->second;
  return "";
}

Json parse_body(const HttpRequest& r) {
  if (trim(r.body).empty()) return Json::object();
  try {
    auto j = Json::parse(r.body);
    if (!j.is_object()) throw ApiError(ErrorCode::kParse, "request body must be a JSON object");
    return j;
  } catch (const Json::parse_error& e) {
    throw ApiError(ErrorCode::kParse, std::string("request body is not valid JSON: ") + e.what());
  }
}

template <typename T>
T field(const Json& body, const char* name) {
  if (!body.contains(name)) throw ApiError(ErrorCode::kInvalidArgument, std::string("missing field '") + name + "'");
  try {
    return body.at(name).get<T>();
  } catch (const Json::exception&) {
    throw ApiError(ErrorCode::kInvalidArgument, std::string("field '") + name + "' has the wrong type");
  }
}

HttpResponse method_not_allowed(const HttpRequest& r) {
  return {405, {{"code", "method_not_allowed"},
                {"message", r.method + " is not supported on " + r.path},
                {"detail", Json::object()}}};
}

}  // namespace

HttpResponse Router::handle(const HttpRequest& r) {
  try {
    const auto parts = split_path(r.path);
    const bool get = r.method == "GET";
    const bool post = r.method == "POST";
    if (parts.size() == 1 && parts[0] == "sessions") {
      if (!post) return method_not_allowed(r);
      const auto body = parse_body(r);
      std::optional<Condition> cond;
      if (body.contains("condition") && !body.at("condition").is_null()) {
        try {
          cond = study::condition_from_name(field<std::string>(body, "condition"));
        } catch (const Error& e) {
          throw ApiError(ErrorCode::kInvalidArgument, e.what());
        }
      }
      return {201, service_.create_session(field<std::string>(body, "participant_id"), cond,
                                           field<std::string>(body, "item_set_id"))};
    }
    if (parts.size() == 3 && parts[0] == "sessions") {
      const auto& id = parts[1];
      const auto token = bearer_token(r);
      if (parts[2] == "next") {
        if (!get) return method_not_allowed(r);
        return {200, service_.next_item(id, token)};
      }
      if (parts[2] == "responses") {
        if (!post) return method_not_allowed(r);
        const auto body = parse_body(r);
        return {200, service_.submit_response(id, token, field<int>(body, "item_index"),
                                              field<std::string>(body, "text"))};
      }
      if (parts[2] == "status") {
        if (!get) return method_not_allowed(r);
        return {200, service_.status(id, token)};
      }
    }
    if (parts.size() == 2 && parts[0] == "export") {
      if (!post) return method_not_allowed(r);
      return {200, service_.export_to_disk(parts[1])};
    }
    if (parts.size() == 1 && parts[0] == "surveys") {
      if (!post) return method_not_allowed(r);
      const auto body = parse_body(r);
      const auto id = field<std::string>(body, "session_id");
      auto token = bearer_token(r);
      if (token.empty()) token = body.value("token", "");
      return {201, service_.submit_survey(id, token, body.value("answers", Json::object()),
                                          body.value("reflection", ""))};
    }
    return {404, error_envelope(ErrorCode::kNotFound, "no route for " + r.method + " " + r.path)};
  } catch (const ApiError& e) {
    return {http_status_for(e.code()), error_envelope(e.code(), e.what(), e.detail())};
  } catch (const Error& e) {
    return {http_status_for(e.code()), error_envelope(e.code(), e.what())};
  } catch (const std::exception& e) {
    return {500, error_envelope(ErrorCode::kInternal, e.what())};
  }
}

struct HttpServer::Impl {
  httplib::Server server;
  Router& router;
  explicit Impl(Router& r) : router(r) {}

  void dispatch(const httplib::Request& req, httplib::Response& res) {
    HttpRequest hr;
    hr.method = req.method;
    hr.path = req.path;
    hr.body = req.body;
    for (const auto& [k, v] : req.headers) {
      std::string key = k;
      std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
      hr.headers[key] = v;
    }
    const auto out = router.handle(hr);
    res.status = out.status;
    res.set_content(out.body.dump(), "application/json");
  }
};

HttpServer::HttpServer(Router& router) : impl_(std::make_unique<Impl>(router)) {
  auto handler = [this](const httplib::Request& req, httplib::Response& res) { impl_->dispatch(req, res); };
  impl_->server.Get(".*", handler);
  impl_->server.Post(".*", handler);
  impl_->server.Put(".*", handler);
  impl_->server.Delete(".*", handler);
  impl_->server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  impl_->server.Options(".*", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type, Authorization, X-Session-Token");
    res.status = 204;
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = impl_->server.bind_to_any_port(host);
    if (p <= 0) fail(ErrorCode::kIo, "cannot bind " + host);
    return p;
  }
  if (!impl_->server.bind_to_port(host, port)) fail(ErrorCode::kIo, fmt::format("cannot bind {}:{}", host, port));
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace counselkit::service
