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

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "talkplay/service.hpp"
#include "test_util.hpp"

#include <httplib.h>

using namespace talkplay;
using namespace talkplay::service;
using nlohmann::json;

namespace {

struct Stack {
  catalog::Catalog catalog = catalog::load_catalog(testing::data_dir() / "catalog_small");
  tok::Vocabulary vocab{256, 2};
  retrieval::TokenIndex index;
  seq::Params<float> model;

  Stack() {
    tok::ItemTokens items;
    const std::array<std::array<std::uint32_t, 5>, 5> codes = {
        {{0, 0, 0, 0, 0}, {0, 1, 0, 1, 0}, {1, 0, 1, 0, 1}, {1, 1, 1, 1, 1}, {0, 0, 1, 1, 0}}};
    for (std::size_t i = 0; i < 5; ++i) {
      items["t" + std::to_string(i + 1)] = tok::encode_item(vocab, codes[i]);
    }
    std::unordered_map<std::string, double> pop;
    for (const auto& t : catalog.tracks()) pop[t.track_id] = catalog.popularity_or_zero(t.track_id);
    index = retrieval::TokenIndex(vocab, items, pop);
    seq::ModelConfig mc;
    mc.vocab_size = vocab.size();
    mc.d_model = 16;
    mc.n_layers = 1;
    mc.n_heads = 2;
    mc.context_len = 512;
    mc.seed = 4;
    model = seq::init_params(mc, 256, std::nullopt);
  }

  ServiceOptions options() const {
    ServiceOptions o;
    o.top_n = 3;
    o.seed = 1;
    o.max_response_tokens = 16;
    o.sampling = {0.0, 0.9, 1.0};
    return o;
  }
};


}  // namespace

TEST_CASE("feedback parsing") {
  CHECK(parse_feedback("") == Feedback::kNone);
  CHECK(parse_feedback("none") == Feedback::kNone);
  CHECK(parse_feedback("accept") == Feedback::kAccept);
  CHECK(parse_feedback("reject") == Feedback::kReject);
  CHECK_THROWS_AS(parse_feedback("maybe"), InvalidArgument);
}

TEST_CASE("a session never repeats a track until the catalog is exhausted") {
  Stack st;
  auto store = std::make_shared<MemorySessionStore>();
  ChatService svc(st.model, st.vocab, st.index, st.catalog, store, st.options());
  auto id = svc.create_session();
  std::set<std::string> shown;
  bool reset_seen = false;
  for (int i = 0; i < 7; ++i) {
    auto r = svc.post_message(id, "play something " + std::to_string(i));
    REQUIRE_FALSE(r.no_recommendation);
    CHECK(r.turn_index == static_cast<std::size_t>(i + 1));
    CHECK(r.generated_music_tokens.size() == 5);
    CHECK_FALSE(r.assistant_text.empty());
    const auto& top = r.recommendations.front().track_id;
    if (r.exclusion_reset) {
      reset_seen = true;
      CHECK(shown.size() == 5);
      shown.clear();
    }
    CHECK_FALSE(shown.contains(top));
    shown.insert(top);
  }
  CHECK(reset_seen);
  auto s = store->get(id);
  REQUIRE(s);
  CHECK(s->turns.size() == 21);
  CHECK(s->exhaustion_resets == 1);
  CHECK_THROWS_AS(svc.post_message(id, "   "), InvalidArgument);
  CHECK_THROWS_AS(svc.post_message("nope", "x"), NotFound);
}

TEST_CASE("reject feedback is folded into the user turn") {
  Stack st;
  auto store = std::make_shared<MemorySessionStore>();
  ChatService svc(st.model, st.vocab, st.index, st.catalog, store, st.options());
  auto id = svc.create_session();
  svc.post_message(id, "some folk");
  svc.post_message(id, "", Feedback::kReject);
  svc.post_message(id, "jazz please", Feedback::kReject);
  auto s = *store->get(id);
  CHECK(s.turns[3].content == "Play something different.");
  CHECK(s.turns[6].content == "Play something different. jazz please");
  auto prompt = svc.render_history(s, "next");
  CHECK(tok::decode_text(st.vocab, prompt).find("Play something different. jazz please") !=
        std::string::npos);
}

TEST_CASE("sessions are seeded and reproducible") {
  Stack st;
  auto opts = st.options();
  opts.sampling = {1.0, 0.9, 1.0};
  ChatService a(st.model, st.vocab, st.index, st.catalog, std::make_shared<MemorySessionStore>(), opts);
  ChatService b(st.model, st.vocab, st.index, st.catalog, std::make_shared<MemorySessionStore>(), opts);
  auto ia = a.create_session({{"seed", 42}});
  auto ib = b.create_session({{"seed", 42}});
  for (int i = 0; i < 3; ++i) {
    auto ra = a.post_message(ia, "hello");
    auto rb = b.post_message(ib, "hello");
    CHECK(response_to_json(ra) == response_to_json(rb));
  }
  CHECK_THROWS_AS(a.create_session({{"temperature", "hot"}}), InvalidArgument);
  CHECK_THROWS_AS(a.create_session({{"top_p", 0.0}}), InvalidArgument);
  CHECK_THROWS_AS(a.create_session({{"seed", -1}}), InvalidArgument);
}

TEST_CASE("file store survives a restart") {
  testing::TempDir dir("store");
  Stack st;
  std::string id;
  {
    auto store = std::make_shared<FileSessionStore>(dir / "sessions.jsonl");
    ChatService svc(st.model, st.vocab, st.index, st.catalog, store, st.options());
    id = svc.create_session();
    svc.post_message(id, "one");
    svc.post_message(id, "two");
  }
  auto store = std::make_shared<FileSessionStore>(dir / "sessions.jsonl");
  auto s = store->get(id);
  REQUIRE(s);
  CHECK(s->turns.size() == 6);
  CHECK(s->turns[3].content == "two");
  CHECK(s->shown_track_ids.size() == 2);
  CHECK(session_from_json(session_to_json(*s)).turns == s->turns);
}

TEST_CASE("scripted session matches the golden transcript") {
  Stack st;
  ChatService svc(st.model, st.vocab, st.index, st.catalog, std::make_shared<MemorySessionStore>(),
                  st.options());
  auto id = svc.create_session({{"seed", 7}});
  json transcript = json::array();
  transcript.push_back(response_to_json(svc.post_message(id, "Play some mellow folk")));
  transcript.push_back(response_to_json(svc.post_message(id, "", Feedback::kReject)));
  transcript.push_back(response_to_json(svc.post_message(id, "Now something from the 1990s")));
  auto history = svc.get_session(id);
  history.erase("session_id");
  history.erase("created_at");
  transcript.push_back(history);
  const auto text = transcript.dump(2) + "\n";
  CHECK(text == testing::golden("service_transcript.golden.json", text));
}

TEST_CASE("http api") {
  Stack st;
  ChatService svc(st.model, st.vocab, st.index, st.catalog, std::make_shared<MemorySessionStore>(),
                  st.options());
  httplib::Server server;
  register_routes(server, svc);
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client cli("127.0.0.1", port);

  auto health = cli.Get("/healthz");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(health->get_header_value("Access-Control-Allow-Origin") == "*");

  auto created = cli.Post("/v1/sessions", R"({"temperature": 0.0})", "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  const std::string id = json::parse(created->body).at("session_id");
  CHECK(id.size() == 16);

  auto msg = cli.Post("/v1/sessions/" + id + "/messages", R"({"text": "folk please"})", "application/json");
  REQUIRE(msg);
  CHECK(msg->status == 200);
  auto body = json::parse(msg->body);
  CHECK(body["turn_index"] == 1);
  CHECK(body["recommendations"].size() >= 1);
  const std::string first = body["recommendations"][0]["track_id"];

  auto rej = cli.Post("/v1/sessions/" + id + "/messages", R"({"text": "", "feedback": "reject"})",
                      "application/json");
  REQUIRE(rej);
  CHECK(rej->status == 200);
  CHECK(json::parse(rej->body)["recommendations"][0]["track_id"] != first);

  auto session = cli.Get("/v1/sessions/" + id);
  REQUIRE(session);
  auto sj = json::parse(session->body);
  CHECK(sj["turns"].size() == 6);
  CHECK(sj["turns"][1].contains("track"));

  auto track = cli.Get("/v1/tracks/t4");
  REQUIRE(track);
  CHECK(json::parse(track->body)["title"] == "Caf\xc3\xa9 Noir");
  CHECK(json::parse(track->body).contains("music_tokens"));

  CHECK(cli.Get("/v1/tracks/zzz")->status == 404);
  CHECK(cli.Get("/v1/sessions/unknown")->status == 404);
  CHECK(cli.Post("/v1/sessions/unknown/messages", R"({"text":"x"})", "application/json")->status == 404);
  CHECK(cli.Post("/v1/sessions/" + id + "/messages", "not json", "application/json")->status == 400);
  CHECK(cli.Post("/v1/sessions/" + id + "/messages", R"({"text":""})", "application/json")->status == 400);
  CHECK(cli.Post("/v1/sessions/" + id + "/messages", R"({"text":"x","feedback":"meh"})",
                 "application/json")->status == 400);
  CHECK(cli.Post("/v1/sessions", R"({"top_p": 2})", "application/json")->status == 400);
  auto pre = cli.Options("/v1/sessions");
  REQUIRE(pre);
  CHECK(pre->status == 204);

  server.stop();
  t.join();
}

TEST_CASE("service config takes environment overrides") {
  testing::TempDir dir("svc");
  std::ofstream(dir / "s.toml") << "[service]\nport = 8080\nweights = \"uniform\"\n";
  ::setenv("TALKPLAY_SERVICE_PORT", "9001", 1);
  auto cfg = load_service_config(dir / "s.toml");
  CHECK(cfg.get_int("service.port", 0) == 9001);
  CHECK(cfg.get_string("service.weights", "") == "uniform");
  ::unsetenv("TALKPLAY_SERVICE_PORT");
}
