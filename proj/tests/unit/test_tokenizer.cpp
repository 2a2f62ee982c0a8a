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

#include "talkplay/tokenizer.hpp"
#include "test_util.hpp"

using namespace talkplay;
using namespace talkplay::tok;

TEST_CASE("vocabulary layout") {
  Vocabulary v(256, 16);
  CHECK(v.size() == 256 + 80 + 5);
  CHECK(v.music_begin() == 256);
  CHECK(v.music_end() == 336);
  CHECK(v.som() == 336);
  CHECK(v.eom() == 337);
  CHECK(v.playlist_unk() == 338);
  CHECK(v.user() == 339);
  CHECK(v.assistant() == 340);
  CHECK(v.music_token(Modality::kPlaylist, 0) == 256);
  CHECK(v.music_token(Modality::kSemantic, 3) == 256 + 16 + 3);
  CHECK(v.music_token(Modality::kAudio, 15) == 335);
  CHECK_THROWS_AS(v.music_token(Modality::kAudio, 16), InvalidArgument);
}

TEST_CASE("decode inverts encode for every modality and cluster") {
  for (std::uint32_t k : {4u, 16u, 1024u}) {
    Vocabulary v(256, k);
    for (Modality m : kModalityOrder) {
      for (std::uint32_t c = 0; c < k; ++c) {
        auto d = decode_token(v, v.music_token(m, c));
        auto* mt = std::get_if<MusicToken>(&d);
        REQUIRE(mt != nullptr);
        CHECK(mt->modality == m);
        CHECK(mt->cluster == c);
      }
    }
  }
}

TEST_CASE("worked example surface form") {
  Vocabulary v(256, 1024);
  auto seq = encode_item(v, std::array<std::uint32_t, 5>{59, 361, 7, 98, 29});
  CHECK(item_surface(v, seq) ==
        "<|playlist-59|><|semantic-361|><|metadata-7|><|lyrics-98|><|audio-29|>");
  CHECK(parse_item_surface(v, item_surface(v, seq)) == seq);
  CHECK(decode_item(v, seq)[1] == 361u);
}

TEST_CASE("cold item uses the playlist unk token") {
  Vocabulary v(256, 8);
  ClusterTuple c = {std::nullopt, 1u, 2u, 3u, 4u};
  auto seq = encode_item(v, c);
  CHECK(seq[0] == v.playlist_unk());
  CHECK(is_valid_item(v, seq));
  CHECK(item_surface(v, seq).starts_with("<|playlist-unk|>"));
  CHECK(decode_item(v, seq) == c);
  CHECK(parse_item_surface(v, item_surface(v, seq)) == seq);
  ClusterTuple bad = {1u, std::nullopt, 2u, 3u, 4u};
  CHECK_THROWS_AS(encode_item(v, bad), InvalidArgument);
}

TEST_CASE("slot validity") {
  Vocabulary v(256, 4);
  auto seq = encode_item(v, std::array<std::uint32_t, 5>{0, 1, 2, 3, 0});
  CHECK(is_valid_item(v, seq));
  std::swap(seq.ids[1], seq.ids[2]);
  CHECK_FALSE(is_valid_item(v, seq));
  CHECK_THROWS(parse_item_surface(v, "<|playlist-1|><|semantic-1|>"));
  CHECK_THROWS(parse_item_surface(v, "<|playlist-1|><|semantic-9|><|metadata-0|><|lyrics-0|><|audio-0|>"));
}

TEST_CASE("surface encoding round trips") {
  Vocabulary v(256, 16);
  std::vector<TokenId> ids = encode_text("caf\xc3\xa9 <ok>");
  ids.push_back(v.user());
  ids.push_back(v.som());
  for (Modality m : kModalityOrder) ids.push_back(v.music_token(m, 7));
  ids.push_back(v.eom());
  ids.push_back(v.assistant());
  auto surface = decode_to_surface(v, ids);
  CHECK(encode_surface(v, surface) == ids);
  CHECK(decode_text(v, ids) == "caf\xc3\xa9 <ok>");
  CHECK_THROWS_AS(decode_token(v, v.size()), InvalidArgument);
}

TEST_CASE("item token file round trip") {
  testing::TempDir dir("tok");
  Vocabulary v(256, 8);
  ItemTokens items;
  items["a"] = encode_item(v, std::array<std::uint32_t, 5>{1, 2, 3, 4, 5});
  items["b"] = encode_item(v, ClusterTuple{std::nullopt, 0u, 0u, 0u, 7u});
  save_item_tokens(v, items, dir / "items.tok");
  CHECK(load_item_tokens(v, dir / "items.tok") == items);
}
