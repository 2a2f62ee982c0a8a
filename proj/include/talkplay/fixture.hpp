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
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "talkplay/catalog.hpp"
#include "talkplay/conversation.hpp"
#include "talkplay/datasynth.hpp"
#include "talkplay/item2vec.hpp"
#include "talkplay/quantizer.hpp"
#include "talkplay/tokenizer.hpp"

// A synthetic catalog with planted structure. Tracks belong to latent genres
// and carry four binary attributes (mood, era, theme, tempo). Each content
// embedding is a Gaussian blob centred on (genre, one attribute), and each
// playlist draws from a single genre and mood, so every modality has a known
// cluster structure.
namespace talkplay::fixture {

struct PlantedParams {
  std::uint32_t genres = 8;
  std::uint32_t artists_per_genre = 8;
  std::uint32_t tracks_per_artist = 8;
  std::uint32_t playlists = 450;
  std::uint32_t last_day_playlists = 60;  // created on the final date
  std::uint32_t playlist_len = 8;
  std::uint32_t dim = 16;  // content embedding width
  double noise = 0.05;     // blob standard deviation; centres are N(0, 1)
  std::uint64_t seed = 7;
};

struct PlantedCatalog {
  catalog::Catalog catalog;
  // semantic, metadata, lyrics, audio (no playlist modality)
  std::vector<catalog::EmbeddingMatrix> content;
  std::unordered_map<std::string, std::uint32_t> genre_of;
  nlohmann::json manifest;
};

PlantedCatalog make_planted_catalog(const PlantedParams& params);

// Catalog files, the content embeddings (<modality>.tpemb) and manifest.json.
void write_planted_catalog(const PlantedCatalog& planted, const std::filesystem::path& dir);

struct WorldOptions {
  std::uint32_t k = 16;
  std::size_t test_size = 50;
  std::size_t train_conversations = 400;  // at most one per train playlist
  item2vec::SkipGramConfig item2vec{.dim = 16, .epochs = 10, .negatives_per_positive = 5,
                                    .learning_rate = 0.025, .seed = 11};
  synth::RuleSynthParams synth;
  std::uint64_t seed = 3;
};

// The full data pipeline over a planted catalog: split, playlist embedding,
// codebooks, item tokens and train/test conversations.
struct PlantedWorld {
  PlantedCatalog planted;
  catalog::CatalogSplit split;
  std::vector<catalog::EmbeddingMatrix> embeddings;  // all five, modality order
  std::vector<quant::Codebook> codebooks;            // modality order
  tok::Vocabulary vocab{256, 1};
  tok::ItemTokens items;
  std::vector<synth::Conversation> train;
  std::vector<synth::Conversation> test;
};

PlantedWorld build_planted_world(const PlantedParams& params, const WorldOptions& options);

}  // namespace talkplay::fixture
