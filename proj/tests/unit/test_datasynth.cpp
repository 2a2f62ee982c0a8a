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

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "talkplay/datasynth.hpp"
#include "talkplay/llm_client.hpp"
#include "test_util.hpp"

#include <httplib.h>

using namespace talkplay;
using namespace talkplay::synth;
using namespace std::chrono;

namespace {

catalog::Catalog small() { return catalog::load_catalog(testing::data_dir() / "catalog_small"); }


Conversation conv(std::vector<Turn> turns) { return {"c", "p", std::move(turns)}; }

// Replays canned answers in order; an empty answer means a transport failure.
class ScriptedTransport : public LlmTransport {
 public:
  explicit ScriptedTransport(std::vector<std::string> answers) : answers_(std::move(answers)) {}
  std::string complete(const std::string& prompt) override {
    prompts.push_back(prompt);
    const auto& a = answers_.at(std::min(calls++, answers_.size() - 1));
    if (a.empty()) throw TransportError("connection refused");
    return a;
  }
  std::size_t calls = 0;
  std::vector<std::string> prompts;

 private:
  std::vector<std::string> answers_;
};

LlmClientSpec spec(std::string endpoint = "http://127.0.0.1:1/v1/complete") {
  LlmClientSpec s;
  s.endpoint = std::move(endpoint);
  s.model = "test-model";
  return s;
}

const char* kGoodAnswer = R"(Sure! [
  {"role": "user", "content": "Play something mellow and folky"},
  {"role": "music", "content": "t1"},
  {"role": "assistant", "content": "Here is Harbor Lights."},
  {"role": "user", "content": "Now something faster"},
  {"role": "assistant", "content": "Try Neon Road."},
  {"role": "music", "content": "t2"}
] Enjoy.)";

}  // namespace

TEST_CASE("conversation validation") {
  auto c = small();
  CHECK(validate_conversation(conv({{Role::kUser, "hi"}, {Role::kMusic, "t1"}, {Role::kAssistant, "ok"}}), c)
            .empty());
  auto bad = validate_conversation(conv({{Role::kMusic, "t1"}, {Role::kUser, "hi"}}), c);
  REQUIRE_FALSE(bad.empty());
  CHECK(bad.front().find("first turn must be user") != std::string::npos);
  auto unknown = validate_conversation(
      conv({{Role::kUser, "hi"}, {Role::kMusic, "nope"}, {Role::kAssistant, "ok"}}), c);
  REQUIRE(unknown.size() == 1);
  CHECK(unknown.front().find("turn 1") != std::string::npos);
  CHECK(unknown.front().find("nope") != std::string::npos);
  auto mid = validate_conversation(conv({{Role::kUser, "hi"}, {Role::kMusic, "t1"}}), c);
  REQUIRE_FALSE(mid.empty());
  CHECK(mid.back().find("mid-exchange") != std::string::npos);
  auto empty = validate_conversation(conv({{Role::kUser, ""}, {Role::kMusic, "t1"}, {Role::kAssistant, "ok"}}), c);
  CHECK_FALSE(empty.empty());
  // Assistant before music is accepted.
  CHECK(validate_conversation(conv({{Role::kUser, "hi"}, {Role::kAssistant, "ok"}, {Role::kMusic, "t1"}}), c)
            .empty());
}

TEST_CASE("conversation json") {
  Conversation c{"id", "p1", {{Role::kUser, "hi \"there\""}, {Role::kMusic, "t1"}, {Role::kAssistant, "ok"}}};
  CHECK(conversation_from_json(conversation_to_json(c)) == c);
  auto bare = conversation_from_json(turns_to_json(c.turns));
  CHECK(bare.turns == c.turns);
  CHECK(bare.conversation_id.empty());
  CHECK_THROWS(conversation_from_json(nlohmann::json::parse(R"([{"role":"dj","content":"x"}])")));
  testing::TempDir dir("conv");
  save_conversations({c, c}, dir / "c.jsonl");
  auto back = load_conversations(dir / "c.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[1] == c);
  CHECK(exchanges(c).front().track_id == "t1");
  CHECK(from_exchanges("id", "p1", exchanges(c)) == c);
}

TEST_CASE("negatives share an artist but are not in the playlist") {
  auto c = small();
  CHECK(split_artists("Ava Stone, Ben Vale ,") == std::vector<std::string>{"Ava Stone", "Ben Vale"});
  // p2 = t4 (Cleo Marsh), t5 (Dax Frost): nobody else by them.
  CHECK(negative_pool(*c.find_playlist("p2"), c).empty());
  catalog::Playlist p{"x", year_month_day(year{2024} / 1 / 1), {"t3"}};
  // Ben Vale also appears on the t2 credit.
  CHECK(negative_pool(p, c) == std::vector<std::string>{"t2"});
  catalog::Playlist q{"y", year_month_day(year{2024} / 1 / 1), {"t2"}};
  CHECK(negative_pool(q, c) == std::vector<std::string>{"t1", "t3"});
  auto s = sample_negatives(q, c, 1, 5);
  REQUIRE(s.size() == 1);
  CHECK(sample_negatives(q, c, 1, 5) == s);
  CHECK(sample_negatives(q, c, 10, 5).size() == 2);
}

TEST_CASE("audio tags") {
  CHECK(is_audio_tag("fast tempo"));
  CHECK(is_audio_tag("Acoustic Guitar"));
  CHECK_FALSE(is_audio_tag("jazz"));
  CHECK_FALSE(is_audio_tag("mellow"));
}

TEST_CASE("rule-based synthesis produces valid, seeded conversations") {
  auto c = small();
  for (const auto& p : c.playlists()) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto conv = synthesize_rule_based(p, c, seed);
      CHECK(validate_conversation(conv, c).empty());
      CHECK(conv.source_playlist_id == p.playlist_id);
      CHECK(conv == synthesize_rule_based(p, c, seed));
      std::set<std::string> in_playlist(p.track_ids.begin(), p.track_ids.end());
      auto ex = exchanges(conv);
      CHECK(ex.size() >= (p.track_ids.size() + 1) / 2);
      for (const auto& e : ex) CHECK(c.contains(e.track_id));
      // A rejected negative is always followed by a playlist track.
      CHECK(in_playlist.contains(ex.back().track_id));
      std::size_t targets = 0;
      for (const auto& e : ex) targets += in_playlist.contains(e.track_id);
      CHECK(targets >= (p.track_ids.size() + 1) / 2);
    }
  }
  catalog::Playlist one{"x", year_month_day(year{2024} / 1 / 1), {"t1", "t1"}};
  CHECK_THROWS_AS(synthesize_rule_based(one, c, 0), InvalidArgument);
}

TEST_CASE("synthesis prompt matches the golden file") {
  auto c = small();
  auto prompt = render_synthesis_prompt(*c.find_playlist("p1"), c, {"t5"});
  CHECK(prompt == testing::golden("synthesis_prompt.golden", prompt));
  CHECK(track_block(c.at("t3")).find("Year") == std::string::npos);
}

TEST_CASE("answer parsing") {
  auto turns = parse_llm_answer(kGoodAnswer);
  CHECK(turns.size() == 6);
  CHECK_THROWS_AS(parse_llm_answer("no list here"), SchemaError);
  CHECK_THROWS_AS(parse_llm_answer("[{\"role\": \"user\"}]"), SchemaError);
  CHECK_THROWS_AS(parse_llm_answer("[1, 2]"), SchemaError);
}

TEST_CASE("llm synthesis retries and validates") {
  auto c = small();
  const auto& p1 = *c.find_playlist("p1");
  ScriptedTransport ok({kGoodAnswer});
  auto conv = synthesize_llm(p1, c, spec(), ok);
  CHECK(ok.calls == 1);
  CHECK(conv.turns[1].content == "t1");
  CHECK(conv.turns[4].role == Role::kMusic);  // normalized order

  ScriptedTransport flaky({"", "garbage", kGoodAnswer});
  CHECK_NOTHROW(synthesize_llm(p1, c, spec(), flaky));
  CHECK(flaky.calls == 3);

  ScriptedTransport outsider({R"([{"role":"user","content":"x"},{"role":"music","content":"t4"},{"role":"assistant","content":"y"}])"});
  CHECK_THROWS_WITH_AS(synthesize_llm(p1, c, spec(), outsider), doctest::Contains("outside"), SchemaError);
  CHECK(outsider.calls == 3);

  ScriptedTransport down({""});
  CHECK_THROWS_AS(synthesize_llm(p1, c, spec(), down), TransportError);
}

TEST_CASE("provider config never stores keys inline") {
  auto good = Config::parse("[llm]\nendpoint = \"http://x/y\"\nmodel = \"m\"\nkey_env = \"MY_KEY\"\n");
  auto s = LlmClientSpec::from_config(good);
  CHECK(s.key_env == "MY_KEY");
  CHECK(s.max_retries == 2);
  auto inline_key = Config::parse("[llm]\nendpoint = \"http://x/y\"\napi_key = \"sk-123\"\n");
  CHECK_THROWS_AS(LlmClientSpec::from_config(inline_key), InvalidArgument);
  CHECK_THROWS_AS(LlmClientSpec::from_config(Config::parse("[llm]\nmodel = \"m\"\n")), InvalidArgument);
  CHECK_THROWS_AS(LlmClientSpec::from_config(Config::parse(
                      "[llm]\nendpoint = \"http://x\"\nprompt_template = \"other\"\n")),
                  InvalidArgument);
}

TEST_CASE("http transport sends the key from the environment") {
  httplib::Server server;
  std::string seen_auth, seen_model;
  server.Post("/v1/complete", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    seen_model = nlohmann::json::parse(req.body).at("model");
    res.set_content(nlohmann::json{{"text", kGoodAnswer}}.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  ::setenv("TALKPLAY_TEST_LLM_KEY", "secret-token", 1);
  auto s = spec("http://127.0.0.1:" + std::to_string(port) + "/v1/complete");
  s.key_env = "TALKPLAY_TEST_LLM_KEY";
  auto transport = make_http_transport(s);
  auto c = small();
  auto conv = synthesize_llm(*c.find_playlist("p1"), c, s, *transport);
  CHECK(seen_auth == "Bearer secret-token");
  CHECK(seen_model == "test-model");
  CHECK(conv.turns.size() == 6);
  ::unsetenv("TALKPLAY_TEST_LLM_KEY");

  auto dead = spec("http://127.0.0.1:1/v1/complete");
  dead.timeout_s = 1;
  dead.max_retries = 0;
  auto dead_transport = make_http_transport(dead);
  CHECK_THROWS_AS(dead_transport->complete("x"), TransportError);
  server.stop();
  t.join();
}

TEST_CASE("in-flight requests are bounded per endpoint") {
  class SlowTransport : public LlmTransport {
   public:
    std::string complete(const std::string&) override {
      int now = ++active;
      int prev = peak.load();
      while (now > prev && !peak.compare_exchange_weak(prev, now)) {
      }
      std::this_thread::sleep_for(milliseconds(20));
      --active;
      return kGoodAnswer;
    }
    std::atomic<int> active{0}, peak{0};
  };
  auto c = small();
  auto s = spec("http://limiter-test/");
  s.max_in_flight = 2;
  SlowTransport slow;
  std::vector<std::thread> workers;
  for (int i = 0; i < 6; ++i) {
    workers.emplace_back([&] { synthesize_llm(*c.find_playlist("p1"), c, s, slow); });
  }
  for (auto& w : workers) w.join();
  CHECK(slow.peak.load() <= 2);
  CHECK(slow.peak.load() >= 1);
}
