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
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "talkplay/catalog.hpp"

// Playlist co-occurrence item embeddings: skip-gram with negative sampling
// where each playlist is a bag of items.
namespace talkplay::item2vec {

struct SkipGramConfig {
  std::uint32_t dim = 128;
  std::uint32_t epochs = 5;
  std::uint32_t negatives_per_positive = 5;
  double learning_rate = 0.025;
  std::uint64_t seed = 1;
};

using Pair = std::pair<std::string, std::string>;

// Every ordered pair (a, b), a != b position-wise, within each playlist.
std::vector<Pair> build_pairs(std::span<const catalog::Playlist> playlists);

struct TrainResult {
  catalog::EmbeddingMatrix embeddings;
  std::vector<double> epoch_loss;  // mean negative-sampling loss per epoch
};

// Input vectors of the trained model, one row per track seen in `playlists`
// (rows sorted by track id). Throws TrainingError when no pair exists.
TrainResult train_item2vec(std::span<const catalog::Playlist> playlists,
                           const SkipGramConfig& config);

// Loss of one (center, context, negatives) step and its gradients, in double
// precision:  -log s(u_o . v) - sum_n log s(-u_n . v).
struct StepGrad {
  double loss = 0.0;
  std::vector<double> d_center;
  std::vector<double> d_context;
  std::vector<std::vector<double>> d_negatives;
};

StepGrad sgns_loss_and_grad(std::span<const double> center, std::span<const double> context,
                            std::span<const std::vector<double>> negatives);

}  // namespace talkplay::item2vec
