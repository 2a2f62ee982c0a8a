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

#include <fstream>
#include <sstream>

#include "talkplay/render.hpp"
#include "test_util.hpp"

using namespace talkplay;
using namespace talkplay::tok;
using synth::Role;

namespace {

struct Fixture {
  Vocabulary vocab{256, 4};
  ItemTokens items;
  synth::Conversation conv;

  Fixture() {
    items["t1"] = encode_item(vocab, std::array<std::uint32_t, 5>{1, 2, 3, 0, 1});
    items["t2"] = encode_item(vocab, ClusterTuple{std::nullopt, 0u, 0u, 3u, 2u});
    conv.conversation_id = "c";
    conv.turns = {{Role::kUser, "Play some folk"},
                  {Role::kMusic, "t1"},
                  {Role::kAssistant, "Here is Harbor Lights by Ava Stone."},
                  {Role::kUser, "Now something newer"},
                  {Role::kAssistant, "Try Neon Road."},
                  {Role::kMusic, "t2"}};
  }
};

std::string golden(const std::string& name) {
  std::ifstream in(testing::data_dir() / name, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("conversation rendering matches the golden surface") {
  Fixture f;
  auto r = render_conversation(f.conv, f.vocab, f.items);
  CHECK(decode_to_surface(f.vocab, r.ids) == golden("rendered_conversation.golden"));
  CHECK(r.ids.size() == r.segments.size());
  REQUIRE(r.exchange_starts.size() == 2);
  CHECK(r.ids[r.exchange_starts[0]] == f.vocab.user());
  CHECK(r.ids[r.exchange_starts[1]] == f.vocab.user());
}

TEST_CASE("segments and loss masks") {
  Fixture f;
  auto r = render_conversation(f.conv, f.vocab, f.items);
  auto all = loss_mask(r, true);
  CHECK(std::all_of(all.begin(), all.end(), [](auto m) { return m == 1; }));
  auto resp = loss_mask(r, false);
  for (std::size_t i = 0; i < r.ids.size(); ++i) {
    const bool music = r.ids[i] >= f.vocab.music_begin() && r.segments[i] == Segment::kMusic;
    if (music) CHECK(resp[i] == 1);
    if (r.ids[i] == f.vocab.user()) CHECK(resp[i] == 0);
    if (r.ids[i] == f.vocab.assistant()) CHECK(resp[i] == 1);
  }
  const std::size_t user_tokens = std::count(r.segments.begin(), r.segments.end(), Segment::kUser);
  CHECK(user_tokens == 2 + std::string("Play some folk").size() + std::string("Now something newer").size());
}

TEST_CASE("missing item tokens are reported") {
  Fixture f;
  f.items.erase("t2");
  CHECK_THROWS_WITH_AS(render_conversation(f.conv, f.vocab, f.items), doctest::Contains("t2"),
                       InvalidArgument);
  CHECK_THROWS_AS(render_conversation(f.conv, Vocabulary(16, 4), f.items), InvalidArgument);
}

TEST_CASE("windows cut at exchange boundaries") {
  Fixture f;
  auto r = render_conversation(f.conv, f.vocab, f.items);
  auto whole = window_sequence(r, 4096);
  REQUIRE(whole.size() == 1);
  CHECK(whole[0].ids == r.ids);

  auto split = window_sequence(r, r.exchange_starts[1] + 1);
  REQUIRE(split.size() == 2);
  CHECK(split[0].ids.size() == r.exchange_starts[1]);
  CHECK(split[1].ids.front() == f.vocab.user());
  CHECK(split[0].ids.size() + split[1].ids.size() == r.ids.size());

  auto tiny = window_sequence(r, 10);
  REQUIRE(tiny.size() == 2);
  for (const auto& w : tiny) {
    CHECK(w.ids.size() == 10);
    CHECK(w.ids.front() == f.vocab.user());
  }
}

TEST_CASE("prompts keep the query and drop old exchanges first") {
  Fixture f;
  auto ex = synth::exchanges(synth::normalize_turn_order(f.conv));
  auto p = render_prompt(ex, "more", f.vocab, f.items, 4096, 8);
  auto expected = render_conversation(f.conv, f.vocab, f.items).ids;
  expected.push_back(f.vocab.user());
  for (auto id : encode_text("more")) expected.push_back(id);
  CHECK(p.ids == expected);

  const std::size_t second = p.ids.size() - p.exchange_starts[1];
  auto trimmed = render_prompt(ex, "more", f.vocab, f.items, second + 8, 8);
  CHECK(trimmed.ids.size() == second);
  CHECK(trimmed.ids.front() == f.vocab.user());
  CHECK(trimmed.exchange_starts.size() == 2);

  auto query_only = render_prompt(ex, "more", f.vocab, f.items, 5 + 8, 8);
  CHECK(decode_to_surface(f.vocab, query_only.ids) == "<|user|>more");
  auto cut = render_prompt(ex, "a long query", f.vocab, f.items, 12, 8);
  CHECK(cut.ids.size() == 4);
  CHECK(cut.ids.front() == f.vocab.user());
}
