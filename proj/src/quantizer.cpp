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

#include "talkplay/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "talkplay/binary_io.hpp"

namespace talkplay::quant {
namespace {

constexpr std::string_view kMagic = "TPCBK1";

template <typename A, typename B>
double sq_dist(std::span<const A> a, std::span<const B> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += diff * diff;
  }
  return s;
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

KMeansResult fit_kmeans(std::span<const float> data, std::uint32_t dim, Modality modality,
                        const KMeansOptions& options) {
  if (dim == 0) throw InvalidArgument("k-means: zero dim");
  const std::size_t n = data.size() / dim;
  const std::size_t k = options.k;
  if (n == 0) throw InvalidArgument("k-means: empty matrix");
  if (k == 0) throw InvalidArgument("k-means: k must be >= 1");
  if (n < k) {
    throw InvalidArgument("k-means: " + std::to_string(n) + " rows < k=" + std::to_string(k));
  }
  auto point = [&](std::size_t i) { return data.subspan(i * dim, dim); };

  std::vector<double> cent(k * dim);
  auto centroid = [&](std::size_t c) { return std::span<double>(cent).subspan(c * dim, dim); };
  auto ccentroid = [&](std::size_t c) {
    return std::span<const double>(cent).subspan(c * dim, dim);
  };

  // k-means++ seeding.
  std::mt19937_64 rng(options.seed);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t first = static_cast<std::size_t>(rng() % n);
  std::copy(point(first).begin(), point(first).end(), centroid(0).begin());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], sq_dist(point(i), ccentroid(c - 1)));
      total += nearest[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double r = uniform01(rng) * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += nearest[i];
        if (acc > r && nearest[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<std::size_t>(rng() % n);
    }
    std::copy(point(pick).begin(), point(pick).end(), centroid(c).begin());
  }

  KMeansResult result;
  std::vector<std::uint32_t> labels(n);
  std::vector<double> dist(n);
  std::vector<double> sums(k * dim);
  std::vector<std::size_t> sizes(k);

  auto assign_all = [&] {
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      std::uint32_t arg = 0;
      for (std::size_t c = 0; c < k; ++c) {
        double d = sq_dist(point(i), ccentroid(c));
        if (d < best) {
          best = d;
          arg = static_cast<std::uint32_t>(c);
        }
      }
      labels[i] = arg;
      dist[i] = best;
      inertia += best;
    }
    return inertia;
  };

  for (std::uint32_t iter = 0; iter < std::max<std::uint32_t>(options.max_iters, 1); ++iter) {
    result.inertia_history.push_back(assign_all());
    result.iterations = iter + 1;

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(sizes.begin(), sizes.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++sizes[labels[i]];
      auto p = point(i);
      for (std::size_t j = 0; j < dim; ++j) sums[labels[i] * dim + j] += p[j];
    }
    double max_shift = 0.0;
    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<double> updated(dim);
      if (sizes[c] > 0) {
        for (std::size_t j = 0; j < dim; ++j) {
          updated[j] = sums[c * dim + j] / static_cast<double>(sizes[c]);
        }
      } else {
        // Empty cluster: move it onto the point that is currently worst served.
        std::size_t far = n;
        for (std::size_t i = 0; i < n; ++i) {
          if (taken[i]) continue;
          if (far == n || dist[i] > dist[far]) far = i;
        }
        taken[far] = true;
        dist[far] = 0.0;
        auto p = point(far);
        for (std::size_t j = 0; j < dim; ++j) updated[j] = p[j];
      }
      max_shift = std::max(max_shift, std::sqrt(sq_dist(std::span<const double>(updated),
                                                        ccentroid(c))));
      std::copy(updated.begin(), updated.end(), centroid(c).begin());
    }
    if (max_shift < options.tol) break;
  }

  Codebook& cb = result.codebook;
  cb.modality = modality;
  cb.k = static_cast<std::uint32_t>(k);
  cb.dim = dim;
  cb.centroids.resize(k * dim);
  for (std::size_t i = 0; i < cent.size(); ++i) cb.centroids[i] = static_cast<float>(cent[i]);
  cb.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cb.inertia += sq_dist(point(i), cb.centroid(assign(cb, point(i))));
  }
  return result;
}

KMeansResult fit_kmeans(const catalog::EmbeddingMatrix& matrix, const KMeansOptions& options) {
  return fit_kmeans(matrix.data(), matrix.dim(), matrix.modality(), options);
}

std::uint32_t assign(const Codebook& codebook, std::span<const float> vector) {
  if (vector.size() != codebook.dim) {
    throw InvalidArgument("assign: vector dim " + std::to_string(vector.size()) +
                          " != codebook dim " + std::to_string(codebook.dim));
  }
  double best = std::numeric_limits<double>::infinity();
  std::uint32_t arg = 0;
  for (std::uint32_t c = 0; c < codebook.k; ++c) {
    double d = sq_dist(vector, codebook.centroid(c));
    if (d < best) {
      best = d;
      arg = c;
    }
  }
  return arg;
}

void save_codebook(const Codebook& codebook, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  binio::Writer w(out);
  w.magic(kMagic);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(codebook.modality));
  w.put<std::uint32_t>(codebook.k);
  w.put<std::uint32_t>(codebook.dim);
  w.array(std::span<const float>(codebook.centroids));
  w.put<double>(codebook.inertia);
  w.check();
}

Codebook load_codebook(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  binio::Reader r(in, path.string());
  r.expect_magic(kMagic);
  Codebook cb;
  cb.modality = modality_from_byte(r.get<std::uint8_t>());
  cb.k = r.get<std::uint32_t>();
  cb.dim = r.get<std::uint32_t>();
  if (cb.k == 0 || cb.dim == 0) throw LoadError(path.string() + ": empty codebook");
  cb.centroids.resize(std::size_t{cb.k} * cb.dim);
  r.array(std::span<float>(cb.centroids));
  cb.inertia = r.get<double>();
  if (!r.at_end()) throw LoadError(path.string() + ": trailing bytes");
  for (float v : cb.centroids) {
    if (!std::isfinite(v)) throw LoadError(path.string() + ": non-finite centroid");
  }
  return cb;
}

tok::ItemTokens tokenize_items(const tok::Vocabulary& vocab, std::span<const Codebook> codebooks,
                               std::span<const catalog::EmbeddingMatrix> embeddings,
                               std::span<const std::string> track_ids) {
  if (codebooks.size() != kNumModalities || embeddings.size() != kNumModalities) {
    throw InvalidArgument("tokenize: need one codebook and one embedding matrix per modality");
  }
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    const Modality mod = kModalityOrder[m];
    if (codebooks[m].modality != mod || embeddings[m].modality() != mod) {
      throw InvalidArgument("tokenize: inputs must follow the modality order");
    }
    if (codebooks[m].k != vocab.k()) {
      throw InvalidArgument("tokenize: " + std::string(modality_name(mod)) + " codebook has k=" +
                            std::to_string(codebooks[m].k) + ", vocabulary expects " +
                            std::to_string(vocab.k()));
    }
    if (codebooks[m].dim != embeddings[m].dim()) {
      throw InvalidArgument("tokenize: " + std::string(modality_name(mod)) +
                            " codebook and embeddings differ in dim");
    }
  }
  tok::ItemTokens out;
  for (const auto& id : track_ids) {
    tok::ClusterTuple clusters;
    for (std::size_t m = 0; m < kNumModalities; ++m) {
      auto row = embeddings[m].find(id);
      if (!row) {
        if (m == 0) continue;
        throw InvalidArgument("tokenize: track " + id + " has no " +
                              std::string(modality_name(kModalityOrder[m])) + " embedding");
      }
      clusters[m] = assign(codebooks[m], *row);
    }
    out.emplace(id, tok::encode_item(vocab, clusters));
  }
  return out;
}

}  // namespace talkplay::quant
