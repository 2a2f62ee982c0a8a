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
#include <filesystem>
#include <span>
#include <vector>

#include "talkplay/catalog.hpp"
#include "talkplay/common.hpp"
#include "talkplay/tokenizer.hpp"

namespace talkplay::quant {

// K centroids for one modality. Centroids are stored as float32 so that the
// file round trip is exact; assignment compares in double.
struct Codebook {
  Modality modality = Modality::kSemantic;
  std::uint32_t k = 0;
  std::uint32_t dim = 0;
  std::vector<float> centroids;  // k * dim, row-major
  double inertia = 0.0;          // sum of squared distances at the end of fit

  std::span<const float> centroid(std::uint32_t i) const {
    return std::span<const float>(centroids).subspan(std::size_t{i} * dim, dim);
  }

  friend bool operator==(const Codebook&, const Codebook&) = default;
};

struct KMeansOptions {
  std::uint32_t k = 16;
  std::uint64_t seed = 0;
  std::uint32_t max_iters = 100;
  double tol = 1e-6;  // stop once every centroid moves less than this
};

struct KMeansResult {
  Codebook codebook;
  // Inertia after each assignment step; non-increasing.
  std::vector<double> inertia_history;
  std::uint32_t iterations = 0;
};

// k-means++ seeding followed by Lloyd iterations. Empty clusters are reseeded
// to the point farthest from its assigned centroid.
KMeansResult fit_kmeans(const catalog::EmbeddingMatrix& matrix, const KMeansOptions& options);

// Same, over raw row-major data (rows x dim).
KMeansResult fit_kmeans(std::span<const float> data, std::uint32_t dim, Modality modality,
                        const KMeansOptions& options);

// Index of the nearest centroid by squared Euclidean distance; ties go to the
// lowest index.
std::uint32_t assign(const Codebook& codebook, std::span<const float> vector);

// "TPCBK1", u8 modality, u32 k, u32 dim, float32 centroids, float64 inertia.
void save_codebook(const Codebook& codebook, const std::filesystem::path& path);
Codebook load_codebook(const std::filesystem::path& path);

// Token tuples for `track_ids` from five codebooks and embedding matrices,
// both in modality order. A track without a playlist embedding gets
// <|playlist-unk|>; a missing content embedding throws InvalidArgument, as
// does a codebook whose k differs from the vocabulary's.
tok::ItemTokens tokenize_items(const tok::Vocabulary& vocab, std::span<const Codebook> codebooks,
                               std::span<const catalog::EmbeddingMatrix> embeddings,
                               std::span<const std::string> track_ids);

}  // namespace talkplay::quant
