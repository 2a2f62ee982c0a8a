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

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "talkplay/common.hpp"

namespace talkplay::tok {

using TokenId = std::uint32_t;

// Byte-level text tokens, followed by the 5*K music tokens grouped by
// modality, followed by the special tokens.
//
//   [0, B)                 text bytes
//   [B + m*K, B + (m+1)*K) music tokens of modality m (kModalityOrder index)
//   B + 5K                 <start_of_music>
//   B + 5K + 1             <end_of_music>
//   B + 5K + 2             <|playlist-unk|>
//   B + 5K + 3             <|user|>
//   B + 5K + 4             <|assistant|>
class Vocabulary {
 public:
  static constexpr std::uint32_t kNumSpecial = 5;
  static constexpr std::uint32_t kByteVocab = 256;

  Vocabulary(std::uint32_t base_size, std::uint32_t k_per_modality);

  std::uint32_t base_size() const { return base_; }
  std::uint32_t k() const { return k_; }
  std::uint32_t size() const { return base_ + kNumModalities * k_ + kNumSpecial; }
  std::uint32_t music_begin() const { return base_; }
  std::uint32_t music_end() const { return base_ + kNumModalities * k_; }

  TokenId som() const { return music_end(); }
  TokenId eom() const { return music_end() + 1; }
  TokenId playlist_unk() const { return music_end() + 2; }
  TokenId user() const { return music_end() + 3; }
  TokenId assistant() const { return music_end() + 4; }

  // Number of distinct 5-token items addressable, K^5 (saturating).
  std::uint64_t item_capacity() const;

  TokenId music_token(Modality m, std::uint32_t cluster) const;
  bool is_music(TokenId id) const { return id >= music_begin() && id < music_end(); }
  // First/one-past-last id of modality m's music range.
  std::pair<TokenId, TokenId> modality_range(Modality m) const;

  // Whether `id` may occupy slot m of a music block.
  bool valid_in_slot(Modality m, TokenId id) const;

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;

 private:
  std::uint32_t base_;
  std::uint32_t k_;
};

struct TextToken {
  std::uint32_t value;
};
struct MusicToken {
  Modality modality;
  std::uint32_t cluster;
};
enum class Special { kStartOfMusic, kEndOfMusic, kPlaylistUnk, kUser, kAssistant };
using DecodedToken = std::variant<TextToken, MusicToken, Special>;

// Throws InvalidArgument for id >= vocab size.
DecodedToken decode_token(const Vocabulary& vocab, TokenId id);

// Surface form of a single token: `<|semantic-12|>`, `<start_of_music>`...
// Text tokens render as their byte.
std::string token_surface(const Vocabulary& vocab, TokenId id);

// One item: one token per modality in kModalityOrder. The playlist slot may be
// the reserved unk id for items without a playlist embedding.
struct MusicTokenSeq {
  std::array<TokenId, kNumModalities> ids{};

  TokenId operator[](std::size_t i) const { return ids[i]; }
  friend auto operator<=>(const MusicTokenSeq&, const MusicTokenSeq&) = default;
};

// Per-modality cluster indices; nullopt in the playlist slot means cold item.
using ClusterTuple = std::array<std::optional<std::uint32_t>, kNumModalities>;

MusicTokenSeq encode_item(const Vocabulary& vocab, const ClusterTuple& clusters);
MusicTokenSeq encode_item(const Vocabulary& vocab,
                          const std::array<std::uint32_t, kNumModalities>& clusters);
ClusterTuple decode_item(const Vocabulary& vocab, const MusicTokenSeq& seq);

bool is_valid_item(const Vocabulary& vocab, const MusicTokenSeq& seq);

// `<|playlist-59|><|semantic-361|>...`
std::string item_surface(const Vocabulary& vocab, const MusicTokenSeq& seq);
// Parses the five-token surface form (whitespace between tokens allowed).
MusicTokenSeq parse_item_surface(const Vocabulary& vocab, std::string_view text);

// Inverse of decode_to_surface: special and music token spellings become
// their ids, every other byte a text token. Literal text that spells a
// token is read as that token.
std::vector<TokenId> encode_surface(const Vocabulary& vocab, std::string_view text);

std::vector<TokenId> encode_text(std::string_view text);
// Surface rendering of an arbitrary id sequence.
std::string decode_to_surface(const Vocabulary& vocab, std::span<const TokenId> ids);
// Only the text-byte tokens, concatenated.
std::string decode_text(const Vocabulary& vocab, std::span<const TokenId> ids);

// track_id -> tokens. File: one "track_id<TAB>surface" line per item.
using ItemTokens = std::map<std::string, MusicTokenSeq, std::less<>>;
void save_item_tokens(const Vocabulary& vocab, const ItemTokens& items,
                      const std::filesystem::path& path);
ItemTokens load_item_tokens(const Vocabulary& vocab, const std::filesystem::path& path);

}  // namespace talkplay::tok
