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

#include "talkplay/datasynth.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <random>
#include <set>
#include <sstream>

namespace talkplay::synth {

std::vector<std::string> validate_conversation(const Conversation& input,
                                               const catalog::Catalog& catalog) {
  std::vector<std::string> violations;
  Conversation conv = normalize_turn_order(input);
  const auto& turns = conv.turns;
  if (turns.empty()) {
    violations.push_back("conversation has no turns");
    return violations;
  }
  if (turns[0].role != Role::kUser) violations.push_back("first turn must be user");
  constexpr std::array<Role, 3> kPattern = {Role::kUser, Role::kMusic, Role::kAssistant};
  for (std::size_t i = 0; i < turns.size(); ++i) {
    const Turn& t = turns[i];
    Role expected = kPattern[i % 3];
    if (i > 0 && t.role != expected) {
      violations.push_back("turn " + std::to_string(i) + ": expected " +
                           std::string(role_name(expected)) + ", found " +
                           std::string(role_name(t.role)));
    }
    if (t.role == Role::kMusic) {
      if (!catalog.contains(t.content)) {
        violations.push_back("turn " + std::to_string(i) + ": unknown track '" + t.content + "'");
      }
    } else if (t.content.find_first_not_of(" \t\r\n") == std::string::npos) {
      violations.push_back("turn " + std::to_string(i) + ": empty " +
                           std::string(role_name(t.role)) + " text");
    }
  }
  if (turns.size() % 3 != 0) violations.push_back("conversation ends mid-exchange");
  return violations;
}

std::vector<std::string> split_artists(const std::string& credit) {
  std::vector<std::string> out;
  std::stringstream ss(credit);
  std::string part;
  while (std::getline(ss, part, ',')) {
    auto b = part.find_first_not_of(' ');
    auto e = part.find_last_not_of(' ');
    if (b != std::string::npos) out.push_back(part.substr(b, e - b + 1));
  }
  return out;
}

std::vector<std::string> negative_pool(const catalog::Playlist& playlist,
                                       const catalog::Catalog& catalog) {
  std::set<std::string> in_playlist(playlist.track_ids.begin(), playlist.track_ids.end());
  std::set<std::string> artists;
  for (const auto& id : playlist.track_ids) {
    for (auto& a : split_artists(catalog.at(id).artist)) artists.insert(std::move(a));
  }
  std::vector<std::string> pool;
  for (const auto& t : catalog.tracks()) {
    if (in_playlist.contains(t.track_id)) continue;
    for (const auto& a : split_artists(t.artist)) {
      if (artists.contains(a)) {
        pool.push_back(t.track_id);
        break;
      }
    }
  }
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::vector<std::string> sample_negatives(const catalog::Playlist& playlist,
                                          const catalog::Catalog& catalog, std::size_t n,
                                          std::uint64_t seed) {
  std::vector<std::string> pool = negative_pool(playlist, catalog);
  std::mt19937_64 rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  if (pool.size() > n) pool.resize(n);
  return pool;
}

bool is_audio_tag(std::string_view tag) {
  static const std::array<std::string_view, 22> kWords = {
      "tempo", "bpm", "beat", "upbeat", "slow", "fast", "acoustic", "electric",
      "guitar", "piano", "synth", "drums", "bass", "major", "minor", "key",
      "vocal", "instrumental", "loud", "quiet", "groove", "percussion"};
  std::string lower(tag);
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (auto w : kWords) {
    if (lower.find(w) != std::string::npos) return true;
  }
  return false;
}

namespace {

using catalog::Track;

template <typename T, std::size_t N>
const T& pick(const std::array<T, N>& options, std::mt19937_64& rng) {
  return options[rng() % N];
}

std::vector<std::string> semantic_tags(const Track& t) {
  std::vector<std::string> out;
  for (const auto& tag : t.tags) {
    if (!is_audio_tag(tag)) out.push_back(tag);
  }
  return out;
}

std::vector<std::string> audio_tags(const Track& t) {
  std::vector<std::string> out;
  for (const auto& tag : t.tags) {
    if (is_audio_tag(tag)) out.push_back(tag);
  }
  return out;
}

std::vector<std::string> lyric_words(const Track& t) {
  static const std::set<std::string> kStop = {
      "that", "this", "with", "have", "from", "your", "what", "when", "where", "will",
      "just", "like", "they", "them", "then", "there", "been", "were", "into", "over",
      "know", "baby", "yeah", "come", "goes", "gonna", "wanna", "about", "cause", "still"};
  std::set<std::string> words;
  if (!t.lyrics) return {};
  std::string cur;
  auto flush = [&] {
    if (cur.size() >= 4 && !kStop.contains(cur)) words.insert(cur);
    cur.clear();
  };
  for (unsigned char c : *t.lyrics) {
    if (std::isalpha(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else {
      flush();
    }
  }
  flush();
  return {words.begin(), words.end()};
}

// Returns an empty string when the track lacks material for this kind.
std::string query_body(QueryKind kind, const Track& t, std::mt19937_64& rng) {
  switch (kind) {
    case QueryKind::kSemantic: {
      auto tags = semantic_tags(t);
      if (tags.empty()) return {};
      std::shuffle(tags.begin(), tags.end(), rng);
      std::string desc = tags[0];
      if (tags.size() > 1) desc = tags[1] + " " + tags[0];
      return "some " + desc + " music";
    }
    case QueryKind::kMetadata: {
      bool use_year = t.year && (rng() % 2 == 0);
      if (use_year) return "music from the " + std::to_string(*t.year / 10 * 10) + "s";
      return "something by " + split_artists(t.artist).front();
    }
    case QueryKind::kLyrics: {
      auto words = lyric_words(t);
      if (words.empty()) return {};
      return "a song about " + words[rng() % words.size()];
    }
    case QueryKind::kAudio: {
      auto tags = audio_tags(t);
      if (tags.empty()) return {};
      return "something with " + tags[rng() % tags.size()];
    }
  }
  return {};
}

std::string make_query(QueryKind preferred, const Track& t, std::mt19937_64& rng) {
  static constexpr std::array<QueryKind, 4> kFallback = {
      QueryKind::kSemantic, QueryKind::kMetadata, QueryKind::kAudio, QueryKind::kLyrics};
  std::string body = query_body(preferred, t, rng);
  for (std::size_t i = 0; body.empty() && i < kFallback.size(); ++i) {
    body = query_body(kFallback[i], t, rng);
  }
  return body;
}

std::string assistant_text(const Track& t, std::mt19937_64& rng) {
  static const std::array<std::string_view, 3> kForms = {"Here is ", "Try ", "How about "};
  return std::string(pick(kForms, rng)) + t.title + " by " + t.artist + ".";
}

}  // namespace

Conversation synthesize_rule_based(const catalog::Playlist& playlist,
                                   const catalog::Catalog& catalog, std::uint64_t seed,
                                   const RuleSynthParams& params) {
  std::vector<std::string> tracks;
  for (const auto& id : playlist.track_ids) {
    if (std::find(tracks.begin(), tracks.end(), id) == tracks.end()) tracks.push_back(id);
  }
  if (tracks.size() < 2) {
    throw InvalidArgument("playlist " + playlist.playlist_id + " needs at least two tracks");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(tracks.begin(), tracks.end(), rng);
  const std::size_t half = (tracks.size() + 1) / 2;
  const std::size_t used =
      std::min(tracks.size(), std::max<std::size_t>(params.max_exchanges, half));
  tracks.resize(used);

  std::vector<std::string> negatives = sample_negatives(playlist, catalog, used, rng());
  std::size_t next_negative = 0;

  static constexpr std::array<QueryKind, 4> kRotation = {
      QueryKind::kMetadata, QueryKind::kLyrics, QueryKind::kAudio, QueryKind::kSemantic};
  static const std::array<std::string_view, 3> kOpeners = {"Play ", "I want ", "Find me "};
  static const std::array<std::string_view, 4> kFollowUps = {
      "Nice! Now play ", "Love it. Next, ", "Good. Play ", "Great. I want "};
  static const std::array<std::string_view, 2> kRejects = {
      "Not this one. Play ", "I don't like it, play something different. Try "};
  std::size_t rotation = rng() % kRotation.size();
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  std::vector<Exchange> exs;
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    const Track& target = catalog.at(tracks[i]);
    QueryKind kind = i == 0 ? QueryKind::kSemantic : kRotation[rotation++ % kRotation.size()];
    std::string body = make_query(kind, target, rng);
    std::string prefix(exs.empty() ? pick(kOpeners, rng) : pick(kFollowUps, rng));
    bool reject = params.p_reject > 0 && next_negative < negatives.size() &&
                  coin(rng) < params.p_reject;
    if (reject) {
      const Track& neg = catalog.at(negatives[next_negative++]);
      exs.push_back({prefix + body, neg.track_id, assistant_text(neg, rng)});
      prefix = pick(kRejects, rng);
    }
    exs.push_back({prefix + body, target.track_id, assistant_text(target, rng)});
  }
  return from_exchanges(playlist.playlist_id + "-rb" + std::to_string(seed % 100000),
                        playlist.playlist_id, exs);
}

}  // namespace talkplay::synth
