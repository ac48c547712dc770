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

#include <fstream>
#include <set>

#include "error.hpp"
#include "framework.hpp"
#include "io.hpp"
#include "test_util.hpp"

using namespace counselkit;

TEST_CASE("level ordinals") {
  CHECK(level_from_ordinal(0) == Level::kNo);
  CHECK(level_from_ordinal(2) == Level::kStrong);
  CHECK_THROWS_AS(level_from_ordinal(5), Error);
  CHECK_THROWS_AS(level_from_ordinal(-1), Error);
  for (auto l : kLevels) CHECK(level_from_ordinal(ordinal(l)) == l);
  CHECK(level_name(Level::kWeak) == "weak");
}

TEST_CASE("mechanism keys and aliases") {
  std::set<std::string_view> keys;
  for (auto m : kMechanisms) {
    keys.insert(mechanism_key(m));
    CHECK(mechanism_from_key(mechanism_key(m)) == m);
    CHECK(mechanism_from_key(mechanism_display_name(m)) == m);
  }
  CHECK(keys.size() == 4);
  CHECK(mechanism_from_key("conversational_direction") == Mechanism::kConversationalOrientation);
  CHECK(mechanism_from_key("Conversational Direction") == Mechanism::kConversationalOrientation);
  CHECK(mechanism_from_key("Stance-Alignment") == Mechanism::kStanceAlignment);
  CHECK_FALSE(mechanism_from_key("warmth").has_value());
}

TEST_CASE("built-in rubric is exhaustive") {
  const auto& r = Rubric::builtin();
  CHECK(r.entries().size() == 12);
  for (auto m : kMechanisms) {
    for (auto l : kLevels) {
      const auto& e = rubric_lookup(m, l);
      CHECK(e.mechanism == m);
      CHECK(e.level == l);
      CHECK_FALSE(e.definition.empty());
    }
  }
  auto round = Rubric::from_json(r.to_json());
  for (auto m : kMechanisms) {
    for (auto l : kLevels) CHECK(round.lookup(m, l).definition == r.lookup(m, l).definition);
  }
}

TEST_CASE("rubric override validation") {
  auto doc = Rubric::builtin().to_json();
  doc.erase(doc.begin());
  CHECK_THROWS_AS(Rubric::from_json(doc), Error);
  auto dup = Rubric::builtin().to_json();
  dup.push_back(dup[0]);
  CHECK_THROWS_AS(Rubric::from_json(dup), Error);
  CHECK_THROWS_AS(Rubric::from_json(Json::object()), Error);

  testutil::TempDir dir("rubric");
  auto edited = Rubric::builtin().to_json();
  edited[0]["definition"] = "custom wording";
  io::write_json(dir / "r.json", edited);
  auto loaded = Rubric::load(dir / "r.json");
  const auto& first = Rubric::builtin().entries()[0];
  CHECK(loaded.lookup(first.mechanism, first.level).definition == "custom wording");
}

TEST_CASE("episode invariant") {
  std::vector<Turn> ctx = {{Speaker::kClient, "hello", 0}, {Speaker::kCounselor, "hi", 1}};
  CHECK_THROWS_AS(Episode::create("e", ctx, {Speaker::kCounselor, "resp", 2}, "t"), Error);

  ctx.push_back({Speaker::kClient, "no way", 2});
  auto e = Episode::create("", ctx, {Speaker::kCounselor, "okay", 3}, "t7");
  CHECK(e.episode_id() == "t7#3");
  CHECK(e.resistance_turn().text == "no way");

  CHECK_THROWS_AS(Episode::create("e", ctx, {Speaker::kClient, "x", 3}, "t"), Error);
  CHECK_THROWS_AS(Episode::create("e", ctx, {Speaker::kCounselor, "x", 5}, "t"), Error);
  CHECK_THROWS_AS(Episode::create("e", ctx, {Speaker::kCounselor, "   ", 3}, "t"), Error);
  CHECK_THROWS_AS(Episode::create("e", {}, {Speaker::kCounselor, "x", 0}, "t"), Error);

  auto back = episode_from_json(episode_to_json(e));
  CHECK(back == e);
}

TEST_CASE("rating vector validation") {
  PartialRatings raw = {{Mechanism::kRespectForAutonomy, 1}, {Mechanism::kStanceAlignment, 3}};
  auto v = validate_rating_vector(raw);
  CHECK_FALSE(v.ok());
  CHECK(v.violations.size() == 3);  // one invalid level, two missing keys
  CHECK_FALSE(to_rating_vector(raw).has_value());

  RatingVector rv({Level::kNo, Level::kWeak, Level::kStrong, Level::kWeak});
  CHECK(ratings_from_json(ratings_to_json(rv)) == rv);
  CHECK(ratings_to_json(rv)["emotional_resonance"] == 2);

  Json bad = ratings_to_json(rv);
  bad["warmth"] = 1;
  CHECK_THROWS_AS(ratings_from_json(bad), Error);
  bad = ratings_to_json(rv);
  bad.erase("stance_alignment");
  CHECK_THROWS_AS(ratings_from_json(bad), Error);
}

TEST_CASE("explanations round trip") {
  auto ex = testutil::make_explanations("x");
  CHECK(explanations_from_json(explanations_to_json(ex)) == ex);
  CHECK(explanations_from_json(Json()).empty());
}

TEST_CASE("jsonl parsing reports bad lines") {
  auto c = io::parse_jsonl("{\"a\":1}\n\nnot json\n{\"b\":2}\n");
  REQUIRE(c.lines.size() == 2);
  CHECK(c.lines[1].line_number == 4);
  REQUIRE(c.skipped.size() == 1);
  CHECK(c.skipped[0].line_number == 3);
  CHECK(io::to_jsonl({Json{{"b", 1}, {"a", 2}}}) == "{\"a\":2,\"b\":1}\n");
}

TEST_CASE("io errors carry codes") {
  try {
    io::read_file("/nonexistent/file");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIo);
  }
  testutil::TempDir dir("io");
  std::ofstream(dir / "bad.jsonl") << "{}\n{oops\n";
  try {
    io::read_jsonl(dir / "bad.jsonl");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kParse);
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
}
