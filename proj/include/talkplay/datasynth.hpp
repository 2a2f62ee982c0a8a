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

#include <cstdint>
#include <string>
#include <vector>

#include "talkplay/catalog.hpp"
#include "talkplay/conversation.hpp"

// Conversation synthesis from playlists: validation, hard negatives and a
// deterministic template generator. The external-LLM path lives in
// llm_client.hpp.
namespace talkplay::synth {

// Every problem found, each prefixed with the offending turn index where one
// applies. Empty means valid. Assistant-before-music triplets are normalized
// before checking.
std::vector<std::string> validate_conversation(const Conversation& conv,
                                               const catalog::Catalog& catalog);

// Tracks by artists that appear in the playlist but which are not in the
// playlist themselves; seeded sample of at most n (sorted pool, shuffled).
// Multi-artist credits ("A, B") count for each artist.
std::vector<std::string> sample_negatives(const catalog::Playlist& playlist,
                                          const catalog::Catalog& catalog, std::size_t n,
                                          std::uint64_t seed);

// The whole pool, for oracles and diagnostics.
std::vector<std::string> negative_pool(const catalog::Playlist& playlist,
                                       const catalog::Catalog& catalog);

std::vector<std::string> split_artists(const std::string& artist_credit);

// Query classes, one per verbalizable modality.
enum class QueryKind { kMetadata, kSemantic, kLyrics, kAudio };

// Whether a tag describes sound (tempo, key, instrumentation) rather than
// genre or mood.
bool is_audio_tag(std::string_view tag);

struct RuleSynthParams {
  double p_reject = 0.25;
  // Exchanges with a target track: max(this, ceil(len/2)) capped at len.
  std::uint32_t max_exchanges = 4;
};

// Throws InvalidArgument for playlists with fewer than two distinct tracks.
Conversation synthesize_rule_based(const catalog::Playlist& playlist,
                                   const catalog::Catalog& catalog, std::uint64_t seed,
                                   const RuleSynthParams& params = {});

}  // namespace talkplay::synth
