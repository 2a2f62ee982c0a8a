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
#include <random>

#include "talkplay/quantizer.hpp"
#include "test_util.hpp"

using namespace talkplay;
using namespace talkplay::quant;

namespace {

catalog::EmbeddingMatrix random_matrix(Modality m, std::size_t rows, std::uint32_t dim,
                                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  catalog::EmbeddingMatrix out(m, dim);
  std::vector<float> row(dim);
  for (std::size_t i = 0; i < rows; ++i) {
    for (auto& v : row) v = n(rng);
    out.add_row("r" + std::to_string(i), row);
  }
  return out;
}

std::uint32_t brute_nearest(const Codebook& b, std::span<const float> x) {
  std::uint32_t best = 0;
  double best_d = 1e300;
  for (std::uint32_t c = 0; c < b.k; ++c) {
    double d = 0;
    for (std::uint32_t j = 0; j < b.dim; ++j) {
      double diff = double(x[j]) - double(b.centroid(c)[j]);
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("inertia never increases") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto m = random_matrix(Modality::kSemantic, 120, 4, 1000 + seed);
    auto r = fit_kmeans(m, {.k = 6, .seed = seed, .max_iters = 100, .tol = 0});
    REQUIRE(!r.inertia_history.empty());
    for (std::size_t i = 1; i < r.inertia_history.size(); ++i) {
      CHECK(r.inertia_history[i] <= r.inertia_history[i - 1] * (1 + 1e-12));
    }
    CHECK(r.codebook.inertia == doctest::Approx(r.inertia_history.back()));
  }
}

TEST_CASE("two well separated blobs are recovered") {
  std::mt19937_64 rng(5);
  std::normal_distribution<float> n(0.0f, 0.3f);
  const std::array<std::array<float, 2>, 2> truth = {{{-4.0f, 1.0f}, {5.0f, -2.0f}}};
  catalog::EmbeddingMatrix m(Modality::kAudio, 2);
  for (int i = 0; i < 2000; ++i) {
    const auto& c = truth[i % 2];
    m.add_row("x" + std::to_string(i), std::vector<float>{c[0] + n(rng), c[1] + n(rng)});
  }
  auto r = fit_kmeans(m, {.k = 2, .seed = 3});
  for (const auto& c : truth) {
    double best = 1e9;
    for (std::uint32_t i = 0; i < 2; ++i) {
      auto got = r.codebook.centroid(i);
      best = std::min(best, std::hypot(double(got[0] - c[0]), double(got[1] - c[1])));
    }
    CHECK(best < 0.1);
  }
}

TEST_CASE("assign equals brute-force nearest centroid") {
  auto m = random_matrix(Modality::kLyrics, 300, 8, 1);
  auto book = fit_kmeans(m, {.k = 16, .seed = 2}).codebook;
  auto q = random_matrix(Modality::kLyrics, 1000, 8, 99);
  for (std::size_t i = 0; i < q.rows(); ++i) {
    CHECK(assign(book, q.row(i)) == brute_nearest(book, q.row(i)));
  }
}

TEST_CASE("fit is deterministic and degenerate inputs are handled") {
  auto m = random_matrix(Modality::kMetadata, 50, 3, 4);
  CHECK(fit_kmeans(m, {.k = 5, .seed = 8}).codebook == fit_kmeans(m, {.k = 5, .seed = 8}).codebook);
  CHECK_THROWS_AS(fit_kmeans(m, {.k = 51}), InvalidArgument);
  CHECK_THROWS_AS(fit_kmeans(m, {.k = 0}), InvalidArgument);

  // All points identical: every cluster still gets a centroid and inertia is 0.
  catalog::EmbeddingMatrix same(Modality::kMetadata, 2);
  for (int i = 0; i < 10; ++i) same.add_row("s" + std::to_string(i), std::vector<float>{1, 1});
  auto r = fit_kmeans(same, {.k = 3, .seed = 1});
  CHECK(r.codebook.inertia == 0.0);
  CHECK(r.codebook.centroids.size() == 6);
}

TEST_CASE("codebook file round trip") {
  testing::TempDir dir("cbk");
  auto m = random_matrix(Modality::kAudio, 40, 5, 6);
  auto book = fit_kmeans(m, {.k = 4, .seed = 1}).codebook;
  save_codebook(book, dir / "a.cbk");
  CHECK(load_codebook(dir / "a.cbk") == book);
  std::ofstream(dir / "bad.cbk", std::ios::binary) << "TPCBK1";
  CHECK_THROWS_AS(load_codebook(dir / "bad.cbk"), LoadError);
}

TEST_CASE("item tokens from codebooks") {
  tok::Vocabulary vocab(256, 2);
  std::vector<Codebook> books;
  std::vector<catalog::EmbeddingMatrix> mats;
  for (Modality mod : kModalityOrder) {
    catalog::EmbeddingMatrix m(mod, 1);
    m.add_row("a", std::vector<float>{-1});
    m.add_row("b", std::vector<float>{1});
    if (mod == Modality::kPlaylist) {
      m = catalog::EmbeddingMatrix(mod, 1);
      m.add_row("a", std::vector<float>{-1});
      m.add_row("x", std::vector<float>{1});
    }
    books.push_back(Codebook{mod, 2, 1, {-1.0f, 1.0f}, 0.0});
    mats.push_back(std::move(m));
  }
  std::vector<std::string> ids = {"a", "b"};
  auto items = tokenize_items(vocab, books, mats, ids);
  CHECK(tok::item_surface(vocab, items.at("a")) ==
        "<|playlist-0|><|semantic-0|><|metadata-0|><|lyrics-0|><|audio-0|>");
  CHECK(tok::item_surface(vocab, items.at("b")) ==
        "<|playlist-unk|><|semantic-1|><|metadata-1|><|lyrics-1|><|audio-1|>");

  std::vector<std::string> missing = {"a", "zz"};
  CHECK_THROWS_AS(tokenize_items(vocab, books, mats, missing), InvalidArgument);
  std::swap(books[1], books[2]);
  CHECK_THROWS_AS(tokenize_items(vocab, books, mats, ids), InvalidArgument);
}
