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

#include "corpus.hpp"
#include "error.hpp"
#include "synthetic.hpp"

using namespace counselkit;
using namespace counselkit::corpus;

namespace {

Transcript make_transcript(const std::string& id, const std::string& speakers) {
  Transcript t;
  t.transcript_id = id;
  for (std::size_t i = 0; i < speakers.size(); ++i) {
    t.turns.push_back({speakers[i] == 'C' ? Speaker::kClient : Speaker::kCounselor,
                       "turn " + std::to_string(i), static_cast<int>(i)});
  }
  return t;
}

}  // namespace

TEST_CASE("ingest well-formed and malformed lines") {
  const std::string good =
      R"({"transcript_id":"a","turns":[{"speaker":"client","text":"hi"},{"speaker":"counselor","text":"hello"}]})"
      "\n"
      R"({"transcript_id":"b","turns":[{"speaker":"client","text":"no","resistance":true},{"speaker":"counselor","text":"ok"}],"metadata":{"language":"zh"}})"
      "\n";
  auto r = ingest_transcripts(good);
  CHECK(r.transcripts.size() == 2);
  CHECK(r.report.skipped.empty());
  REQUIRE(r.inline_marks.size() == 1);
  CHECK(r.inline_marks[0].transcript_id == "b");
  CHECK(r.inline_marks[0].turn_index == 0);
  CHECK(r.transcripts[1].metadata["language"] == "zh");

  auto bad = ingest_transcripts(good + "{\"transcript_id\":\"c\",\"turns\":\n");
  CHECK(bad.transcripts.size() == 2);
  REQUIRE(bad.report.skipped.size() == 1);
  CHECK(bad.report.skipped[0].line_number == 3);

  auto empty = ingest_transcripts("");
  CHECK(empty.transcripts.empty());
  CHECK(empty.report.warnings.size() == 1);
}

TEST_CASE("ingest schema violations are per line") {
  const std::string text =
      R"({"transcript_id":"a","turns":[]})"
      "\n"
      R"({"transcript_id":"b","turns":[{"speaker":"robot","text":"x"}]})"
      "\n"
      R"({"transcript_id":"c","turns":[{"speaker":"counselor","text":"x","resistance":true}]})"
      "\n"
      R"({"transcript_id":"d","turns":[{"speaker":"client","text":"x"}]})"
      "\n"
      R"({"transcript_id":"d","turns":[{"speaker":"client","text":"y"}]})"
      "\n";
  auto r = ingest_transcripts(text);
  CHECK(r.transcripts.size() == 1);
  CHECK(r.report.skipped.size() == 4);
  CHECK(r.report.accepted == 1);
}

TEST_CASE("pairing examples") {
  auto t = make_transcript("t", "CKCK");
  SUBCASE("mark at last turn") {
    auto t2 = make_transcript("t", "KC");
    auto r = pair_episodes(t2, {{"t", 1}});
    CHECK(r.episodes.empty());
    REQUIRE(r.report.unpaired.size() == 1);
    CHECK(r.report.unpaired[0].reason == kReasonNoSubsequentTurn);
  }
  SUBCASE("client then counselor") {
    auto r = pair_episodes(t, {{"t", 2}});
    REQUIRE(r.episodes.size() == 1);
    CHECK(r.episodes[0].response().index == 3);
    CHECK(r.episodes[0].context().size() == 3);
    CHECK(r.episodes[0].episode_id() == "t#3");
  }
  SUBCASE("two client turns") {
    auto t2 = make_transcript("t", "CCK");
    auto r = pair_episodes(t2, {{"t", 0}});
    CHECK(r.episodes.empty());
    REQUIRE(r.report.unpaired.size() == 1);
    CHECK(r.report.unpaired[0].reason == kReasonNextTurnIsClient);
    CHECK_FALSE(r.report.unpaired[0].validation_error);
  }
  SUBCASE("mark on counselor turn is a validation error") {
    auto r = pair_episodes(t, {{"t", 1}});
    REQUIRE(r.report.unpaired.size() == 1);
    CHECK(r.report.unpaired[0].validation_error);
  }
  SUBCASE("context window keeps most recent turns") {
    auto r = pair_episodes(t, {{"t", 2}}, {2});
    REQUIRE(r.episodes.size() == 1);
    REQUIRE(r.episodes[0].context().size() == 2);
    CHECK(r.episodes[0].context().front().index == 1);
  }
}

TEST_CASE("pairing adjacency enumeration on five-turn transcripts") {
  // Every speaker pattern of length 5 and every mark position, against the
  // rule written out directly.
  for (int pattern = 0; pattern < 32; ++pattern) {
    std::string s;
    for (int b = 0; b < 5; ++b) s += (pattern >> b) & 1 ? 'C' : 'K';
    auto t = make_transcript("x", s);
    for (int i = 0; i < 5; ++i) {
      auto r = pair_episodes(t, {{"x", i}});
      CAPTURE(s);
      CAPTURE(i);
      if (s[i] != 'C') {
        REQUIRE(r.report.unpaired.size() == 1);
        CHECK(r.report.unpaired[0].validation_error);
      } else if (i == 4) {
        CHECK(r.report.unpaired.at(0).reason == kReasonNoSubsequentTurn);
      } else if (s[i + 1] == 'C') {
        CHECK(r.report.unpaired.at(0).reason == kReasonNextTurnIsClient);
      } else {
        REQUIRE(r.episodes.size() == 1);
        CHECK(r.episodes[0].response().index == i + 1);
      }
    }
  }
}

TEST_CASE("pairing property over random transcripts") {
  std::mt19937_64 rng(11);
  for (int iter = 0; iter < 500; ++iter) {
    std::uniform_int_distribution<int> len(1, 12);
    std::string s;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) s += rng() % 2 ? 'C' : 'K';
    auto t = make_transcript("r", s);
    std::vector<ResistanceMark> marks;
    std::uniform_int_distribution<int> idx(-1, n);
    const int k = static_cast<int>(rng() % 6);
    for (int j = 0; j < k; ++j) marks.push_back({rng() % 10 == 0 ? "other" : "r", idx(rng)});
    std::uniform_int_distribution<int> window(0, 5);
    auto r = pair_episodes(t, marks, {window(rng)});
    CHECK(r.episodes.size() + r.report.unpaired.size() == marks.size());
    for (const auto& e : r.episodes) {
      CHECK(e.resistance_turn().speaker == Speaker::kClient);
      CHECK(e.response().speaker == Speaker::kCounselor);
      CHECK(e.response().index == e.resistance_turn().index + 1);
    }
  }
}

TEST_CASE("corpus statistics") {
  std::vector<LabeledEpisode> weak;
  for (int i = 0; i < 10; ++i) weak.push_back({"e" + std::to_string(i), RatingVector::uniform(Level::kWeak)});
  auto s = corpus_stats(weak);
  CHECK(s.total == 10);
  for (auto m : kMechanisms) {
    CHECK(s.counts[index_of(m)][0] == 0);
    CHECK(s.counts[index_of(m)][1] == 10);
    CHECK(s.counts[index_of(m)][2] == 0);
  }
  weak.push_back({"missing", std::nullopt});
  CHECK_THROWS_WITH_AS(corpus_stats(weak), doctest::Contains("missing"), Error);
}

TEST_CASE("corpus statistics against the generator tally") {
  synthetic::CorpusSpec spec;
  spec.episodes = 100;
  spec.seed = 5;
  auto c = synthetic::synth_corpus(spec);
  std::array<std::array<std::size_t, 3>, 4> tally{};
  std::vector<LabeledEpisode> eps;
  for (const auto& g : c.gold) {
    for (auto m : kMechanisms) ++tally[index_of(m)][static_cast<std::size_t>(ordinal(g.ratings[m]))];
    eps.push_back({g.episode.episode_id(), g.ratings});
  }
  auto s = corpus_stats(eps);
  CHECK(s.counts == tally);
  for (auto m : kMechanisms) {
    const auto& row = s.counts[index_of(m)];
    CHECK(row[0] + row[1] + row[2] == s.total);
  }
  auto table = render_corpus_stats(s);
  CHECK(table.find("Respect for Autonomy") != std::string::npos);
  CHECK(table.find("Total") != std::string::npos);
}

TEST_CASE("synthetic transcripts pair back to their episodes") {
  synthetic::CorpusSpec spec;
  spec.episodes = 50;
  auto c = synthetic::synth_corpus(spec);
  for (std::size_t i = 0; i < c.transcripts.size(); ++i) {
    auto r = pair_episodes(c.transcripts[i], {c.marks[i]});
    REQUIRE(r.episodes.size() == 1);
    CHECK(r.episodes[0] == c.gold[i].episode);
  }
}

TEST_CASE("detector stub refuses to run") {
  HttpDetectorStub stub("http://localhost:1");
  CHECK_THROWS_AS(stub.detect(make_transcript("t", "CK")), Error);
}
