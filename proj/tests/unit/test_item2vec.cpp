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

#include <cmath>
#include <random>

#include "talkplay/item2vec.hpp"

using namespace talkplay;
using namespace talkplay::item2vec;
using namespace std::chrono;

namespace {

catalog::Playlist playlist(std::string id, std::vector<std::string> tracks) {
  return {std::move(id), year_month_day(year{2024} / 1 / 1), std::move(tracks)};
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double cosine(std::span<const float> a, std::span<const float> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

}  // namespace

TEST_CASE("pairs are all ordered within-playlist pairs") {
  std::vector<catalog::Playlist> pls = {playlist("p", {"a", "b", "c"}), playlist("q", {"d"})};
  auto pairs = build_pairs(pls);
  CHECK(pairs.size() == 6);
  CHECK(std::count(pairs.begin(), pairs.end(), Pair{"a", "c"}) == 1);
  CHECK(std::count(pairs.begin(), pairs.end(), Pair{"c", "a"}) == 1);
  for (const auto& [x, y] : pairs) CHECK(x != y);
}

TEST_CASE("negative-sampling loss matches its closed form and gradients") {
  std::vector<double> v = {0.3, -0.2, 0.5}, u = {-0.1, 0.4, 0.2};
  std::vector<std::vector<double>> negs = {{0.2, 0.1, -0.3}, {-0.5, 0.3, 0.1}};
  auto g = sgns_loss_and_grad(v, u, negs);
  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
  };
  double expect = -std::log(sig(dot(u, v)));
  for (const auto& n : negs) expect -= std::log(sig(-dot(n, v)));
  CHECK(g.loss == doctest::Approx(expect).epsilon(1e-12));

  const double h = 1e-6;
  auto loss_at = [&](std::vector<double> vv, std::vector<double> uu,
                     std::vector<std::vector<double>> nn) {
    return sgns_loss_and_grad(vv, uu, nn).loss;
  };
  for (std::size_t i = 0; i < 3; ++i) {
    auto vp = v, vm = v;
    vp[i] += h;
    vm[i] -= h;
    CHECK(g.d_center[i] == doctest::Approx((loss_at(vp, u, negs) - loss_at(vm, u, negs)) / (2 * h)).epsilon(1e-6));
    auto up = u, um = u;
    up[i] += h;
    um[i] -= h;
    CHECK(g.d_context[i] == doctest::Approx((loss_at(v, up, negs) - loss_at(v, um, negs)) / (2 * h)).epsilon(1e-6));
    auto np = negs, nm = negs;
    np[1][i] += h;
    nm[1][i] -= h;
    CHECK(g.d_negatives[1][i] == doctest::Approx((loss_at(v, u, np) - loss_at(v, u, nm)) / (2 * h)).epsilon(1e-6));
  }
}

TEST_CASE("co-occurring tracks end up closer than unrelated ones") {
  std::vector<catalog::Playlist> pls;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 120; ++i) {
    const char group = (i % 2) ? 'x' : 'y';
    std::vector<std::string> ids;
    for (int j = 0; j < 6; ++j) ids.push_back(std::string(1, group) + std::to_string(rng() % 10));
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    pls.push_back(playlist("p" + std::to_string(i), ids));
  }
  auto r = train_item2vec(pls, {.dim = 8, .epochs = 5, .negatives_per_positive = 5,
                                .learning_rate = 0.025, .seed = 3});
  CHECK(r.embeddings.modality() == Modality::kPlaylist);
  CHECK(r.embeddings.rows() == 20);
  CHECK(std::is_sorted(r.embeddings.ids().begin(), r.embeddings.ids().end()));
  CHECK(r.epoch_loss.back() < r.epoch_loss.front());
  double within = 0, across = 0;
  int nw = 0, na = 0;
  const auto& ids = r.embeddings.ids();
  for (std::size_t a = 0; a < ids.size(); ++a) {
    for (std::size_t b = a + 1; b < ids.size(); ++b) {
      double c = cosine(r.embeddings.row(a), r.embeddings.row(b));
      if (ids[a][0] == ids[b][0]) {
        within += c;
        ++nw;
      } else {
        across += c;
        ++na;
      }
    }
  }
  CHECK(within / nw > across / na + 0.3);

  auto again = train_item2vec(pls, {.dim = 8, .epochs = 5, .negatives_per_positive = 5,
                                    .learning_rate = 0.025, .seed = 3});
  CHECK(std::equal(again.embeddings.data().begin(), again.embeddings.data().end(),
                   r.embeddings.data().begin()));
  std::vector<catalog::Playlist> singles = {playlist("s", {"a"})};
  CHECK_THROWS_AS(train_item2vec(singles, {}), TrainingError);
}
