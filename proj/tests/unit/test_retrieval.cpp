// Copyright 2026 The TalkPlay Authors.
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

#include "talkplay/retrieval.hpp"
#include "test_util.hpp"

using namespace talkplay;
using namespace talkplay::retrieval;
using tok::ClusterTuple;
using tok::MusicTokenSeq;
using tok::Vocabulary;

namespace {

// Small K so that partial matches are common.
struct RandomCatalog {
  Vocabulary vocab{256, 3};
  tok::ItemTokens items;
  std::unordered_map<std::string, double> popularity;

  RandomCatalog(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
      ClusterTuple c;
      for (std::size_t m = 0; m < kNumModalities; ++m) c[m] = static_cast<std::uint32_t>(rng() % 3);
      if (rng() % 10 == 0) c[0] = std::nullopt;
      std::string id = "i" + std::to_string(i);
      items[id] = tok::encode_item(vocab, c);
      popularity[id] = static_cast<double>(rng() % 5);  // many ties
    }
  }

  MusicTokenSeq random_query(std::mt19937_64& rng) const {
    ClusterTuple c;
    for (std::size_t m = 0; m < kNumModalities; ++m) c[m] = static_cast<std::uint32_t>(rng() % 3);
    if (rng() % 8 == 0) c[0] = std::nullopt;
    return tok::encode_item(vocab, c);
  }
};

}  // namespace

TEST_CASE("standard profiles") {
  const auto& p = standard_profiles();
  REQUIRE(p.size() == 5);
  CHECK(p[0].name == "uniform");
  CHECK(p[4].name == "quadratic-c2f");
  CHECK(p[4].weights == quadratic_coarse_to_fine());
  CHECK(parse_profile("linear-f2c").lambda == std::array<double, 5>{1, 2, 3, 4, 5});
  CHECK(parse_profile("2, 0, 0, 0, 1").lambda == std::array<double, 5>{2, 0, 0, 0, 1});
  CHECK(parse_profile(profile_to_string(parse_profile("0.5,1,2,3,4"))) == parse_profile("0.5,1,2,3,4"));
  CHECK_THROWS_AS(parse_profile("1,2,3"), ParseError);
  CHECK_THROWS_AS(parse_profile("0,0,0,0,0"), InvalidArgument);
  CHECK_THROWS_AS(parse_profile("1,1,1,1,-1"), InvalidArgument);
  CHECK_THROWS_AS(parse_profile("cubic"), ParseError);
}

TEST_CASE("every overlap pattern scores the weighted sum") {
  Vocabulary v(256, 4);
  const auto w = quadratic_coarse_to_fine();
  auto query = tok::encode_item(v, std::array<std::uint32_t, 5>{1, 1, 1, 1, 1});
  for (std::uint32_t mask = 0; mask < 32; ++mask) {
    std::array<std::uint32_t, 5> c{};
    double expect = 0;
    for (std::size_t m = 0; m < 5; ++m) {
      const bool on = (mask >> m) & 1u;
      c[m] = on ? 1 : 2;
      if (on) expect += w.lambda[m];
    }
    auto item = tok::encode_item(v, c);
    CHECK(score_partial(v, query, item, w) == expect);
    CHECK(match_mask(v, query, item) == mask);
    CHECK(score_mask(static_cast<std::uint8_t>(mask), w) == expect);
  }
  CHECK(score_partial(v, query, query, w) == 55.0);
}

TEST_CASE("playlist unk never matches") {
  Vocabulary v(256, 4);
  ClusterTuple cold = {std::nullopt, 0u, 0u, 0u, 0u};
  auto a = tok::encode_item(v, cold);
  CHECK(score_partial(v, a, a, quadratic_coarse_to_fine()) == 30.0);
  CHECK(match_mask(v, a, a) == 0b11110);
}

TEST_CASE("recommend equals brute-force scoring") {
  RandomCatalog cat(200, 17);
  TokenIndex index(cat.vocab, cat.items, cat.popularity);
  std::mt19937_64 rng(4);
  for (int q = 0; q < 50; ++q) {
    auto query = cat.random_query(rng);
    std::set<std::string> exclude;
    if (q % 3 == 0) exclude = {"i1", "i2", "i" + std::to_string(q)};
    for (const auto& profile : standard_profiles()) {
      for (std::size_t top : {1u, 10u, 500u}) {
        auto got = index.recommend(query, profile.weights, top, exclude);
        auto want = brute_force_rank(index, query, profile.weights, top, exclude);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
          CHECK(got[i].track_id == want[i].track_id);
          CHECK(got[i].score == want[i].score);
          CHECK(got[i].matched == want[i].matched);
        }
      }
    }
  }
}

TEST_CASE("ordering and tie breaks") {
  Vocabulary v(256, 4);
  tok::ItemTokens items;
  items["b"] = tok::encode_item(v, std::array<std::uint32_t, 5>{0, 0, 0, 0, 0});
  items["a"] = tok::encode_item(v, std::array<std::uint32_t, 5>{0, 0, 0, 0, 0});
  items["c"] = tok::encode_item(v, std::array<std::uint32_t, 5>{0, 0, 0, 0, 1});
  items["d"] = tok::encode_item(v, std::array<std::uint32_t, 5>{1, 1, 1, 1, 0});
  items["e"] = tok::encode_item(v, std::array<std::uint32_t, 5>{1, 1, 1, 1, 1});
  items["f"] = items["c"];
  items["0g"] = items["c"];
  TokenIndex index(v, items, {{"c", 90.0}, {"d", 90.0}, {"0g", 90.0}});
  auto query = items.at("a");
  auto r = index.recommend(query, quadratic_coarse_to_fine(), 10);
  std::vector<std::string> ids;
  for (const auto& s : r) ids.push_back(s.track_id);
  // Full matches first (ties by id), then partial matches by score, then
  // popularity, then id; e shares nothing.
  CHECK(ids == std::vector<std::string>{"a", "b", "0g", "c", "f", "d"});
  CHECK(r[2].score == 54.0);
  CHECK(r[5].score == 1.0);
  CHECK(index.exact(query) == std::vector<std::string>{"a", "b"});

  auto audio_only = index.recommend(query, parse_profile("0,0,0,0,1"), 10);
  REQUIRE(audio_only.size() == 3);
  CHECK(audio_only[2].track_id == "d");
  CHECK(index.recommend(query, quadratic_coarse_to_fine(), 10, {"a", "c"}).front().track_id == "b");
}

TEST_CASE("index file round trip") {
  testing::TempDir dir("idx");
  RandomCatalog cat(50, 3);
  TokenIndex index(cat.vocab, cat.items, cat.popularity);
  save_index(index, dir / "x.idx");
  auto back = load_index(dir / "x.idx");
  CHECK(back.items() == index.items());
  CHECK(back.vocab() == index.vocab());
  for (const auto& [id, _] : cat.items) CHECK(back.popularity(id) == index.popularity(id));
  std::mt19937_64 rng(1);
  auto q = cat.random_query(rng);
  auto a = index.recommend(q, quadratic_coarse_to_fine(), 20);
  auto b = back.recommend(q, quadratic_coarse_to_fine(), 20);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].track_id == b[i].track_id);
}
