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

#include "talkplay/tokenizer.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <limits>

namespace talkplay::tok {

Vocabulary::Vocabulary(std::uint32_t base_size, std::uint32_t k_per_modality)
    : base_(base_size), k_(k_per_modality) {
  if (k_per_modality == 0) throw InvalidArgument("vocabulary: k must be >= 1");
  std::uint64_t total = std::uint64_t{base_size} + kNumModalities * std::uint64_t{k_per_modality} +
                        kNumSpecial;
  if (total > std::numeric_limits<TokenId>::max()) {
    throw InvalidArgument("vocabulary: size overflows token id type");
  }
}

std::uint64_t Vocabulary::item_capacity() const {
  std::uint64_t cap = 1;
  for (std::size_t i = 0; i < kNumModalities; ++i) {
    if (cap > std::numeric_limits<std::uint64_t>::max() / k_) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    cap *= k_;
  }
  return cap;
}

TokenId Vocabulary::music_token(Modality m, std::uint32_t cluster) const {
  if (cluster >= k_) {
    throw InvalidArgument("cluster " + std::to_string(cluster) + " out of range for " +
                          std::string(modality_name(m)) + " (k=" + std::to_string(k_) + ")");
  }
  return base_ + static_cast<TokenId>(modality_index(m)) * k_ + cluster;
}

std::pair<TokenId, TokenId> Vocabulary::modality_range(Modality m) const {
  TokenId lo = base_ + static_cast<TokenId>(modality_index(m)) * k_;
  return {lo, lo + k_};
}

bool Vocabulary::valid_in_slot(Modality m, TokenId id) const {
  if (m == Modality::kPlaylist && id == playlist_unk()) return true;
  auto [lo, hi] = modality_range(m);
  return id >= lo && id < hi;
}

DecodedToken decode_token(const Vocabulary& vocab, TokenId id) {
  if (id >= vocab.size()) {
    throw InvalidArgument("token id " + std::to_string(id) + " >= vocab size " +
                          std::to_string(vocab.size()));
  }
  if (id < vocab.base_size()) return TextToken{id};
  if (vocab.is_music(id)) {
    std::uint32_t offset = id - vocab.music_begin();
    return MusicToken{kModalityOrder[offset / vocab.k()], offset % vocab.k()};
  }
  return static_cast<Special>(id - vocab.som());
}

std::string token_surface(const Vocabulary& vocab, TokenId id) {
  DecodedToken d = decode_token(vocab, id);
  if (auto t = std::get_if<TextToken>(&d)) {
    if (t->value < 256) return std::string(1, static_cast<char>(t->value));
    return "<|text-" + std::to_string(t->value) + "|>";
  }
  if (auto m = std::get_if<MusicToken>(&d)) {
    return "<|" + std::string(modality_name(m->modality)) + "-" + std::to_string(m->cluster) +
           "|>";
  }
  switch (std::get<Special>(d)) {
    case Special::kStartOfMusic: return "<start_of_music>";
    case Special::kEndOfMusic: return "<end_of_music>";
    case Special::kPlaylistUnk: return "<|playlist-unk|>";
    case Special::kUser: return "<|user|>";
    case Special::kAssistant: return "<|assistant|>";
  }
  return {};
}

MusicTokenSeq encode_item(const Vocabulary& vocab, const ClusterTuple& clusters) {
  MusicTokenSeq seq;
  for (std::size_t i = 0; i < kNumModalities; ++i) {
    Modality m = kModalityOrder[i];
    if (!clusters[i]) {
      if (m != Modality::kPlaylist) {
        throw InvalidArgument("missing cluster for modality " + std::string(modality_name(m)));
      }
      seq.ids[i] = vocab.playlist_unk();
    } else {
      seq.ids[i] = vocab.music_token(m, *clusters[i]);
    }
  }
  return seq;
}

MusicTokenSeq encode_item(const Vocabulary& vocab,
                          const std::array<std::uint32_t, kNumModalities>& clusters) {
  ClusterTuple t;
  for (std::size_t i = 0; i < kNumModalities; ++i) t[i] = clusters[i];
  return encode_item(vocab, t);
}

ClusterTuple decode_item(const Vocabulary& vocab, const MusicTokenSeq& seq) {
  ClusterTuple out;
  for (std::size_t i = 0; i < kNumModalities; ++i) {
    Modality m = kModalityOrder[i];
    if (!vocab.valid_in_slot(m, seq.ids[i])) {
      throw InvalidArgument("token " + std::to_string(seq.ids[i]) + " invalid in " +
                            std::string(modality_name(m)) + " slot");
    }
    if (seq.ids[i] == vocab.playlist_unk()) continue;
    out[i] = seq.ids[i] - vocab.modality_range(m).first;
  }
  return out;
}

bool is_valid_item(const Vocabulary& vocab, const MusicTokenSeq& seq) {
  for (std::size_t i = 0; i < kNumModalities; ++i) {
    if (!vocab.valid_in_slot(kModalityOrder[i], seq.ids[i])) return false;
  }
  return true;
}

std::string item_surface(const Vocabulary& vocab, const MusicTokenSeq& seq) {
  std::string out;
  for (TokenId id : seq.ids) out += token_surface(vocab, id);
  return out;
}

MusicTokenSeq parse_item_surface(const Vocabulary& vocab, std::string_view text) {
  MusicTokenSeq seq;
  std::size_t slot = 0;
  std::size_t pos = 0;
  auto fail = [&](const std::string& msg) -> void {
    throw ParseError("music tokens '" + std::string(text) + "': " + msg);
  };
  while (pos < text.size()) {
    if (std::isspace(static_cast<unsigned char>(text[pos]))) {
      ++pos;
      continue;
    }
    if (text.substr(pos, 2) != "<|") fail("expected '<|' at offset " + std::to_string(pos));
    std::size_t close = text.find("|>", pos + 2);
    if (close == std::string_view::npos) fail("unterminated token");
    std::string_view body = text.substr(pos + 2, close - pos - 2);
    pos = close + 2;
    std::size_t dash = body.rfind('-');
    if (dash == std::string_view::npos) fail("token without '-'");
    if (slot >= kNumModalities) fail("more than five tokens");
    auto modality = parse_modality(body.substr(0, dash));
    if (!modality) fail("unknown modality '" + std::string(body.substr(0, dash)) + "'");
    if (*modality != kModalityOrder[slot]) {
      fail("modality " + std::string(body.substr(0, dash)) + " out of order");
    }
    std::string_view index = body.substr(dash + 1);
    if (index == "unk" && *modality == Modality::kPlaylist) {
      seq.ids[slot++] = vocab.playlist_unk();
      continue;
    }
    std::uint32_t cluster = 0;
    auto [ptr, ec] = std::from_chars(index.data(), index.data() + index.size(), cluster);
    if (ec != std::errc() || ptr != index.data() + index.size()) {
      fail("bad cluster index '" + std::string(index) + "'");
    }
    try {
      seq.ids[slot++] = vocab.music_token(*modality, cluster);
    } catch (const InvalidArgument& e) {
      fail(e.what());
    }
  }
  if (slot != kNumModalities) fail("expected five tokens, got " + std::to_string(slot));
  return seq;
}

std::vector<TokenId> encode_text(std::string_view text) {
  std::vector<TokenId> out;
  out.reserve(text.size());
  for (unsigned char c : text) out.push_back(c);
  return out;
}

std::string decode_to_surface(const Vocabulary& vocab, std::span<const TokenId> ids) {
  std::string out;
  for (TokenId id : ids) out += token_surface(vocab, id);
  return out;
}

std::vector<TokenId> encode_surface(const Vocabulary& vocab, std::string_view text) {
  static const std::array<std::pair<std::string_view, Special>, 5> kSpecials = {{
      {"<start_of_music>", Special::kStartOfMusic},
      {"<end_of_music>", Special::kEndOfMusic},
      {"<|playlist-unk|>", Special::kPlaylistUnk},
      {"<|user|>", Special::kUser},
      {"<|assistant|>", Special::kAssistant},
  }};
  auto special_id = [&](Special s) -> TokenId {
    switch (s) {
      case Special::kStartOfMusic: return vocab.som();
      case Special::kEndOfMusic: return vocab.eom();
      case Special::kPlaylistUnk: return vocab.playlist_unk();
      case Special::kUser: return vocab.user();
      case Special::kAssistant: return vocab.assistant();
    }
    return 0;
  };
  std::vector<TokenId> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    if (text[pos] == '<') {
      bool matched = false;
      for (const auto& [spelling, sp] : kSpecials) {
        if (text.substr(pos, spelling.size()) == spelling) {
          out.push_back(special_id(sp));
          pos += spelling.size();
          matched = true;
          break;
        }
      }
      if (matched) continue;
      if (text.substr(pos, 2) == "<|") {
        auto close = text.find("|>", pos + 2);
        if (close != std::string_view::npos) {
          std::string_view body = text.substr(pos + 2, close - pos - 2);
          auto dash = body.rfind('-');
          if (dash != std::string_view::npos) {
            std::string_view name = body.substr(0, dash);
            std::string_view num = body.substr(dash + 1);
            std::uint32_t value = 0;
            auto [end, ec] = std::from_chars(num.data(), num.data() + num.size(), value);
            bool numeric = ec == std::errc() && end == num.data() + num.size() && !num.empty();
            auto modality = parse_modality(name);
            if (numeric && modality && value < vocab.k()) {
              out.push_back(vocab.music_token(*modality, value));
              pos = close + 2;
              continue;
            }
            if (numeric && name == "text" && value >= 256 && value < vocab.base_size()) {
              out.push_back(value);
              pos = close + 2;
              continue;
            }
          }
        }
      }
    }
    out.push_back(static_cast<unsigned char>(text[pos]));
    ++pos;
  }
  return out;
}

std::string decode_text(const Vocabulary& vocab, std::span<const TokenId> ids) {
  std::string out;
  for (TokenId id : ids) {
    if (id < vocab.base_size() && id < 256) out += static_cast<char>(id);
  }
  return out;
}

void save_item_tokens(const Vocabulary& vocab, const ItemTokens& items,
                      const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "#tpitems base=" << vocab.base_size() << " k=" << vocab.k() << '\n';
  for (const auto& [id, seq] : items) out << id << '\t' << item_surface(vocab, seq) << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

ItemTokens load_item_tokens(const Vocabulary& vocab, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  ItemTokens items;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected TAB");
    }
    std::string id = line.substr(0, tab);
    MusicTokenSeq seq;
    try {
      seq = parse_item_surface(vocab, std::string_view(line).substr(tab + 1));
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!items.emplace(id, seq).second) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": duplicate track " + id);
    }
  }
  return items;
}

}  // namespace talkplay::tok
