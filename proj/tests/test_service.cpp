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

#include <random>
#include <set>
#include <thread>

#include "error.hpp"
#include "io.hpp"
#include "service.hpp"
#include "test_util.hpp"

#include <httplib.h>

using namespace counselkit;
using namespace counselkit::service;
using study::Condition;

namespace {

// Ratings derived from the episode id; episodes whose id is listed fail.
class HashBackend final : public scoring::ChatBackend {
 public:
  explicit HashBackend(std::set<std::string> bad = {}) : bad_(std::move(bad)) {}
  scoring::ChatReply complete(const scoring::ChatRequest& request) override {
    if (bad_.count(request.episode_id)) fail(ErrorCode::kBackend, "upstream unavailable");
    const auto h = std::hash<std::string>{}(request.episode_id);
    RatingVector rv;
    for (auto m : kMechanisms) rv.set(m, static_cast<Level>((h >> (index_of(m) * 3)) % 3));
    return {scoring::format_target(rv, testutil::make_explanations(request.episode_id), request.target), 1, 1};
  }
  std::string name() const override { return "hash"; }

 private:
  std::set<std::string> bad_;
};

std::vector<Episode> item_set(const std::string& tag, int n = kItems) {
  std::vector<Episode> out;
  for (int i = 0; i < n; ++i) out.push_back(testutil::make_episode(tag + "-" + std::to_string(i)));
  return out;
}

ServiceConfig sync_config(const std::filesystem::path& dir = {}) {
  ServiceConfig c;
  c.data_dir = dir;
  c.background_scoring = false;
  c.seed = 17;
  c.scoring.backend.kind = "echo-gold";
  c.scoring.backend.parallelism = 2;
  return c;
}

std::unique_ptr<StudyService> make_service(const ServiceConfig& c, std::set<std::string> bad = {}) {
  auto s = std::make_unique<StudyService>(c, std::make_shared<HashBackend>(std::move(bad)), [] {
    static std::int64_t t = 1'700'000'000'000;
    return t++;
  });
  s->add_item_set("set", item_set("i"));
  return s;
}

ErrorCode api_code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kInternal;
}

struct Handle {
  std::string id, token;
};

Handle open(StudyService& s, const std::string& pid, Condition c) {
  auto j = s.create_session(pid, c, "set");
  return {j.at("session_id"), j.at("token")};
}

void run_phase(StudyService& s, const Handle& h, const std::string& prefix) {
  for (int i = 0; i < kItems; ++i) {
    s.next_item(h.id, h.token);
    s.submit_response(h.id, h.token, i, prefix + " answer " + std::to_string(i));
  }
}

void complete(StudyService& s, const Handle& h) {
  run_phase(s, h, "pre");
  run_phase(s, h, "post");
}

}  // namespace

TEST_CASE("session lifecycle for both conditions") {
  auto svc = make_service(sync_config());
  auto exp = open(*svc, "P1", Condition::kExperimental);
  auto ctl = open(*svc, "P2", Condition::kControl);

  for (const auto& h : {exp, ctl}) {
    auto first = svc->next_item(h.id, h.token);
    CHECK(first["phase"] == "pre");
    CHECK(first["item_index"] == 0);
    CHECK_FALSE(first.contains("feedback"));
    run_phase(*svc, h, "pre");
    auto st = svc->status(h.id, h.token);
    CHECK(st["phase"] == "post");
    CHECK(st["cursor"] == 0);
  }

  for (int i = 0; i < kItems; ++i) {
    auto e = svc->next_item(exp.id, exp.token);
    auto c = svc->next_item(ctl.id, ctl.token);
    CHECK(e["episode"]["episode_id"] == c["episode"]["episode_id"]);
    CHECK(e["episode"]["episode_id"] == "i-" + std::to_string(i));
    CHECK(e["pre_response"] == "pre answer " + std::to_string(i));
    CHECK(c["pre_response"] == "pre answer " + std::to_string(i));
    REQUIRE(e.contains("feedback"));
    CHECK(e["feedback"]["rubric_excerpts"].size() == 4);
    CHECK(e["feedback"]["explanations"].size() == 4);
    CHECK_FALSE(c.contains("feedback"));
    CHECK_FALSE(c.contains("feedback_error"));
    svc->submit_response(exp.id, exp.token, i, "post");
    svc->submit_response(ctl.id, ctl.token, i, "post");
  }
  CHECK(svc->status(exp.id, exp.token)["state"] == "done");
  CHECK(api_code([&] { svc->next_item(exp.id, exp.token); }) == ErrorCode::kGone);
  CHECK(api_code([&] { svc->submit_response(exp.id, exp.token, 0, "x"); }) == ErrorCode::kGone);

  svc->submit_survey(exp.id, exp.token, {{"usefulness", 4}}, "helpful");
  CHECK(api_code([&] { svc->submit_survey(exp.id, exp.token, {{"usefulness", 4}}, ""); }) == ErrorCode::kConflict);
  CHECK(svc->status(exp.id, exp.token)["survey_submitted"] == true);

  // A finished participant may start again.
  open(*svc, "P1", Condition::kExperimental);
}

TEST_CASE("request validation") {
  auto svc = make_service(sync_config());
  svc->add_item_set("short", item_set("s", 9));
  CHECK(api_code([&] { svc->create_session("P", Condition::kControl, "short"); }) == ErrorCode::kInvalidArgument);
  CHECK(api_code([&] { svc->create_session("P", Condition::kControl, "missing"); }) == ErrorCode::kNotFound);
  CHECK(api_code([&] { svc->create_session(" ", Condition::kControl, "set"); }) == ErrorCode::kInvalidArgument);
  CHECK(api_code([&] { svc->create_session("P", std::nullopt, "set"); }) == ErrorCode::kInvalidArgument);

  auto h = open(*svc, "P", Condition::kControl);
  CHECK(api_code([&] { open(*svc, "P", Condition::kControl); }) == ErrorCode::kConflict);
  CHECK(api_code([&] { svc->next_item(h.id, "wrong"); }) == ErrorCode::kUnauthorized);
  CHECK(api_code([&] { svc->next_item("nope", h.token); }) == ErrorCode::kNotFound);
  CHECK(api_code([&] { svc->submit_response(h.id, h.token, 1, "x"); }) == ErrorCode::kConflict);
  CHECK(api_code([&] { svc->submit_response(h.id, h.token, 0, "   "); }) == ErrorCode::kInvalidArgument);
  svc->submit_response(h.id, h.token, 0, "ok");
  CHECK(api_code([&] { svc->submit_response(h.id, h.token, 0, "again"); }) == ErrorCode::kConflict);
  CHECK(api_code([&] { svc->submit_survey(h.id, h.token, {{"q", 3}}, ""); }) == ErrorCode::kConflict);
}

TEST_CASE("scoring failures surface per item") {
  // Session ids are deterministic for a seed, so a probe service predicts the id.
  auto probe = make_service(sync_config());
  auto h = open(*probe, "E", Condition::kExperimental);
  auto bad = std::make_unique<StudyService>(sync_config(), std::make_shared<HashBackend>(std::set<std::string>{h.id + "/pre/4"}));
  bad->add_item_set("set", item_set("i"));
  auto b = open(*bad, "E", Condition::kExperimental);
  CHECK(b.id == h.id);
  run_phase(*bad, b, "pre");
  for (int i = 0; i < kItems; ++i) {
    auto item = bad->next_item(b.id, b.token);
    CHECK(item.contains("feedback") != (i == 3));
    CHECK(item.contains("feedback_error") == (i == 3));
    bad->submit_response(b.id, b.token, i, "post");
  }
}

TEST_CASE("background scoring reports the scoring state") {
  auto c = sync_config();
  c.background_scoring = true;
  auto svc = make_service(c);
  auto h = open(*svc, "B", Condition::kExperimental);
  run_phase(*svc, h, "pre");
  svc->wait_idle();
  auto st = svc->status(h.id, h.token);
  CHECK(st["phase"] == "post");
  CHECK(st["state"] == "in_progress");
  CHECK(svc->next_item(h.id, h.token).contains("feedback"));
}

TEST_CASE("randomized condition assignment is balanced in blocks") {
  ConditionRandomizer r(5);
  for (int block = 0; block < 50; ++block) {
    auto a = r.next(), b = r.next();
    CHECK(a != b);
  }
  auto c = sync_config();
  c.randomize_seed = 3;
  auto svc = make_service(c);
  int experimental = 0;
  for (int i = 0; i < 10; ++i) {
    auto j = svc->create_session("R" + std::to_string(i), std::nullopt, "set");
    experimental += j["condition"] == "experimental";
  }
  CHECK(experimental == 5);
}

TEST_CASE("randomized API traces keep the invariants") {
  std::mt19937_64 rng(2024);
  auto svc = make_service(sync_config());
  struct Model {
    Handle h;
    Condition condition;
    int phase = 0;  // 0 pre, 1 post, 2 done
    int cursor = 0;
  };
  std::vector<Model> sessions;
  std::map<std::string, std::size_t> open_by_participant;
  std::size_t leaks = 0, out_of_order_accepted = 0, wrong_token_accepted = 0, steps = 0, accepted = 0;

  for (; steps < 12000; ++steps) {
    const auto action = rng() % 10;
    if (sessions.empty() || action == 0) {
      const std::string pid = "P" + std::to_string(rng() % 40);
      const auto cond = rng() % 2 ? Condition::kExperimental : Condition::kControl;
      const bool has_open = open_by_participant.count(pid) > 0;
      try {
        auto h = open(*svc, pid, cond);
        CHECK_FALSE(has_open);
        open_by_participant[pid] = sessions.size();
        sessions.push_back({h, cond});
      } catch (const Error& e) {
        CHECK(has_open);
        CHECK(e.code() == ErrorCode::kConflict);
      }
      continue;
    }
    auto& m = sessions[rng() % sessions.size()];
    const bool bad_token = rng() % 25 == 0;
    const auto token = bad_token ? m.h.token + "x" : m.h.token;
    if (action <= 4) {
      try {
        auto item = svc->next_item(m.h.id, token);
        if (bad_token) ++wrong_token_accepted;
        CHECK(m.phase < 2);
        CHECK(item["item_index"] == m.cursor);
        const bool feedback = item.contains("feedback") || item.contains("feedback_error");
        if (feedback && (m.condition == Condition::kControl || m.phase == 0)) ++leaks;
        if (m.condition == Condition::kExperimental && m.phase == 1) CHECK(feedback);
      } catch (const Error& e) {
        CHECK((bad_token || m.phase == 2));
        CHECK((e.code() == ErrorCode::kUnauthorized || e.code() == ErrorCode::kGone));
      }
    } else {
      int idx = m.cursor;
      if (rng() % 4 == 0) idx += static_cast<int>(rng() % 5) - 2;
      try {
        svc->submit_response(m.h.id, token, idx, "text " + std::to_string(steps));
        ++accepted;
        if (bad_token || idx != m.cursor || m.phase == 2) ++out_of_order_accepted;
        if (++m.cursor == kItems) {
          m.cursor = 0;
          if (++m.phase == 2) {
            for (auto it = open_by_participant.begin(); it != open_by_participant.end(); ++it) {
              if (sessions[it->second].h.id == m.h.id) {
                open_by_participant.erase(it);
                break;
              }
            }
          }
        }
      } catch (const Error& e) {
        CHECK((bad_token || idx != m.cursor || m.phase == 2));
      }
    }
    if (steps % 2000 == 0) {
      const auto events = svc->events();
      CHECK(replay(events).to_json() == svc->state_json());
    }
  }
  CHECK(steps >= 10000);
  CHECK(accepted > 1000);
  CHECK(leaks == 0);
  CHECK(out_of_order_accepted == 0);
  CHECK(wrong_token_accepted == 0);
  const auto events = svc->events();
  CHECK(replay(events).to_json() == svc->state_json());

  std::size_t done = 0;
  for (const auto& m : sessions) done += m.phase == 2;
  CHECK(done > 5);

  // Feedback deliveries in the log belong only to experimental post items.
  auto state = replay(events);
  for (const auto& [id, s] : state.sessions()) {
    if (s.condition == Condition::kControl) CHECK(s.feedback_deliveries == 0);
  }
}

TEST_CASE("replay rejects gaps and unknown sessions") {
  auto svc = make_service(sync_config());
  auto h = open(*svc, "G", Condition::kControl);
  svc->next_item(h.id, h.token);
  svc->submit_response(h.id, h.token, 0, "x");
  auto events = svc->events();
  REQUIRE(events.size() == 3);
  auto gap = events;
  gap.erase(gap.begin() + 1);
  CHECK_THROWS_AS(replay(gap), Error);
  auto orphan = std::vector<EventRecord>{events[1]};
  orphan[0].seq = 1;
  CHECK_THROWS_AS(replay(orphan), Error);
  for (const auto& e : events) CHECK(event_from_json(event_to_json(e)) == e);
  CHECK(ServiceState::from_json(svc->state_json()).to_json() == svc->state_json());
}

TEST_CASE("service recovers from its data directory") {
  testutil::TempDir dir("svc");
  auto c = sync_config(dir.path());
  c.snapshot_every = 7;
  Json before;
  Handle h;
  {
    auto svc = make_service(c);
    h = open(*svc, "R", Condition::kExperimental);
    run_phase(*svc, h, "pre");
    svc->next_item(h.id, h.token);
    svc->submit_response(h.id, h.token, 0, "post 0");
    before = svc->state_json();
  }
  CHECK(std::filesystem::exists(dir / "events.jsonl"));
  CHECK_FALSE(std::filesystem::is_empty(dir / "snapshots"));
  auto svc = make_service(c);
  CHECK(svc->state_json() == before);
  auto item = svc->next_item(h.id, h.token);
  CHECK(item["item_index"] == 1);
  CHECK(item.contains("feedback"));
  auto other = open(*svc, "S", Condition::kControl);
  CHECK(other.id != h.id);
  CHECK(other.token != h.token);

  {
    std::ofstream(dir / "events.jsonl", std::ios::app) << "{broken\n";
  }
  CHECK_THROWS_AS(make_service(c), Error);
}

TEST_CASE("export of completed sessions") {
  auto make = [](std::set<std::string> bad) {
    auto svc = make_service(sync_config(), std::move(bad));
    complete(*svc, open(*svc, "P1", Condition::kControl));
    auto e = open(*svc, "P2", Condition::kExperimental);
    complete(*svc, e);
    svc->submit_survey(e.id, e.token, {{"usefulness", 5}, {"clarity", 4}}, "liked it");
    open(*svc, "P3", Condition::kControl);
    return svc;
  };
  auto svc = make({});
  auto r = svc->export_study("set");
  CHECK(r.sessions == 2);
  CHECK(r.responses.size() == 40);
  CHECK(r.failures.empty());
  REQUIRE(r.surveys.size() == 1);
  CHECK(r.surveys[0]["participant_id"] == "P2");
  auto ds = study::StudyDataset::from_records(r.responses);
  CHECK(ds.missing_cells() == 0);
  CHECK(svc->export_study("set").responses == r.responses);

  auto broken = make({"P2/post/3"});
  auto rb = broken->export_study("set");
  CHECK(rb.responses.size() == 39);
  REQUIRE(rb.failures.size() == 1);
  CHECK(rb.failures[0]["participant_id"] == "P2");
  CHECK(rb.failures[0]["item_id"] == 3);
  CHECK(rb.failures[0]["phase"] == "post");
  CHECK(rb.failures[0]["kind"] == "backend");

  auto empty = make_service(sync_config());
  CHECK(api_code([&] { empty->export_study("set"); }) == ErrorCode::kConflict);
}

TEST_CASE("export writes files under the data directory") {
  testutil::TempDir dir("export");
  auto svc = make_service(sync_config(dir.path()));
  complete(*svc, open(*svc, "P1", Condition::kControl));
  auto summary = svc->export_to_disk("set");
  CHECK(summary["responses"] == 20);
  CHECK(io::read_jsonl(dir.path() / "exports" / "set" / "responses.jsonl").size() == 20);
  CHECK(std::filesystem::exists(dir.path() / "exports" / "set" / "failures.json"));
}

TEST_CASE("router maps endpoints and errors") {
  auto svc = make_service(sync_config());
  Router router(*svc);
  auto call = [&](std::string method, std::string path, Json body = nullptr, std::string token = "") {
    HttpRequest r{std::move(method), std::move(path), {}, body.is_null() ? "" : body.dump()};
    if (!token.empty()) r.headers["authorization"] = "Bearer " + token;
    return router.handle(r);
  };
  auto created = call("POST", "/sessions", {{"participant_id", "W"}, {"condition", "experimental"}, {"item_set_id", "set"}});
  REQUIRE(created.status == 201);
  const std::string id = created.body["session_id"], token = created.body["token"];

  CHECK(call("GET", "/sessions/" + id + "/next").status == 401);
  CHECK(call("GET", "/sessions/" + id + "/next", nullptr, token).status == 200);
  CHECK(call("POST", "/sessions/" + id + "/responses", {{"item_index", 3}, {"text", "x"}}, token).status == 409);
  CHECK(call("POST", "/sessions/" + id + "/responses", {{"item_index", "zero"}, {"text", "x"}}, token).status == 400);
  CHECK(call("POST", "/sessions/" + id + "/responses", {{"text", "x"}}, token).status == 400);
  auto ok = call("POST", "/sessions/" + id + "/responses", {{"item_index", 0}, {"text", "x"}}, token);
  CHECK(ok.status == 200);
  CHECK(ok.body["cursor"] == 1);
  CHECK(call("GET", "/sessions/" + id + "/status", nullptr, token).body["cursor"] == 1);
  CHECK(call("GET", "/sessions/nope/status", nullptr, token).status == 404);
  CHECK(call("DELETE", "/sessions/" + id + "/status", nullptr, token).status == 405);
  CHECK(call("GET", "/unknown").status == 404);
  CHECK(call("POST", "/export/set").status == 409);
  CHECK(call("POST", "/sessions", {{"participant_id", "V"}, {"condition", "purple"}, {"item_set_id", "set"}}).status == 400);

  HttpRequest raw{"POST", "/sessions", {}, "{not json"};
  auto bad = router.handle(raw);
  CHECK(bad.status == 400);
  CHECK(bad.body["code"] == "parse");

  HttpRequest alt{"GET", "/sessions/" + id + "/status", {{"x-session-token", token}}, ""};
  CHECK(router.handle(alt).status == 200);

  auto survey = call("POST", "/surveys", {{"session_id", id}, {"token", token}, {"answers", {{"q", 3}}}});
  CHECK(survey.status == 409);
}

TEST_CASE("http server round trip") {
  auto svc = make_service(sync_config());
  Router router(*svc);
  HttpServer server(router);
  const int port = server.bind("127.0.0.1", 0);
  std::thread th([&] { server.listen(); });

  httplib::Client client("127.0.0.1", port);
  client.set_connection_timeout(5);
  httplib::Result res;
  for (int i = 0; i < 100 && !(res = client.Get("/unknown")); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  REQUIRE(res);
  CHECK(res->status == 404);

  auto created = client.Post("/sessions", Json{{"participant_id", "H"}, {"condition", "control"}, {"item_set_id", "set"}}.dump(),
                             "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  auto body = Json::parse(created->body);
  const std::string path = "/sessions/" + body["session_id"].get<std::string>() + "/next";
  auto denied = client.Get(path);
  REQUIRE(denied);
  CHECK(denied->status == 401);
  CHECK(Json::parse(denied->body)["code"] == "unauthorized");
  auto item = client.Get(path, {{"Authorization", "Bearer " + body["token"].get<std::string>()}});
  REQUIRE(item);
  CHECK(item->status == 200);
  CHECK(Json::parse(item->body)["item_index"] == 0);
  CHECK(item->get_header_value("Access-Control-Allow-Origin") == "*");

  server.stop();
  th.join();
}
