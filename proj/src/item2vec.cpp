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

#include "talkplay/item2vec.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <unordered_map>

namespace talkplay::item2vec {
namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// log(sigmoid(x)) without overflow.
double log_sigmoid(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

std::vector<Pair> build_pairs(std::span<const catalog::Playlist> playlists) {
  std::vector<Pair> pairs;
  for (const auto& p : playlists) {
    const auto& ids = p.track_ids;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      for (std::size_t j = 0; j < ids.size(); ++j) {
        if (i != j) pairs.emplace_back(ids[i], ids[j]);
      }
    }
  }
  return pairs;
}

StepGrad sgns_loss_and_grad(std::span<const double> center, std::span<const double> context,
                            std::span<const std::vector<double>> negatives) {
  const std::size_t d = center.size();
  StepGrad g;
  g.d_center.assign(d, 0.0);
  g.d_context.assign(d, 0.0);
  // Positive term: d/dx [-log s(x)] = s(x) - 1.
  double x = dot(center, context);
  g.loss = -log_sigmoid(x);
  double coef = sigmoid(x) - 1.0;
  for (std::size_t k = 0; k < d; ++k) {
    g.d_center[k] += coef * context[k];
    g.d_context[k] = coef * center[k];
  }
  // Negative terms: d/dx [-log s(-x)] = s(x).
  for (const auto& neg : negatives) {
    double xn = dot(center, neg);
    g.loss -= log_sigmoid(-xn);
    double cn = sigmoid(xn);
    std::vector<double> dn(d);
    for (std::size_t k = 0; k < d; ++k) {
      g.d_center[k] += cn * neg[k];
      dn[k] = cn * center[k];
    }
    g.d_negatives.push_back(std::move(dn));
  }
  return g;
}

TrainResult train_item2vec(std::span<const catalog::Playlist> playlists,
                           const SkipGramConfig& config) {
  if (config.dim < 2) throw InvalidArgument("item2vec dim must be >= 2");
  if (config.negatives_per_positive < 1) throw InvalidArgument("need at least one negative");
  if (!(config.learning_rate > 0)) throw InvalidArgument("learning rate must be positive");

  std::map<std::string, std::uint64_t> counts;
  for (const auto& p : playlists) {
    for (const auto& id : p.track_ids) ++counts[id];
  }
  std::vector<std::string> vocab;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<double> cumulative;
  double total = 0.0;
  for (const auto& [id, n] : counts) {
    index.emplace(id, vocab.size());
    vocab.push_back(id);
    total += std::pow(static_cast<double>(n), 0.75);
    cumulative.push_back(total);
  }

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& [a, b] : build_pairs(playlists)) {
    if (a != b) pairs.emplace_back(index.at(a), index.at(b));
  }
  if (pairs.empty()) throw TrainingError("no co-occurring track pairs to train on");

  const std::size_t n = vocab.size();
  const std::size_t d = config.dim;
  std::mt19937_64 rng(config.seed);
  std::vector<double> w_in(n * d), w_out(n * d, 0.0);
  const double half = 0.5 / static_cast<double>(d);
  for (auto& w : w_in) w = (uniform01(rng) * 2.0 - 1.0) * half;

  auto sample_negative = [&](std::size_t avoid) {
    std::size_t pick = avoid;
    for (int attempt = 0; attempt < 8 && pick == avoid; ++attempt) {
      double r = uniform01(rng) * total;
      pick = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), r) -
                                      cumulative.begin());
      pick = std::min(pick, n - 1);
    }
    return pick;
  };

  std::vector<double> epoch_loss;
  std::vector<std::size_t> order(pairs.size());
  std::vector<std::size_t> negs(config.negatives_per_positive);
  std::vector<double> grad_center(d);
  for (std::uint32_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t idx : order) {
      auto [c, o] = pairs[idx];
      double* v = &w_in[c * d];
      for (auto& ng : negs) ng = sample_negative(o);
      std::fill(grad_center.begin(), grad_center.end(), 0.0);
      auto update_target = [&](std::size_t target, double label) {
        double* u = &w_out[target * d];
        double x = 0.0;
        for (std::size_t k = 0; k < d; ++k) x += v[k] * u[k];
        loss_sum -= label > 0 ? log_sigmoid(x) : log_sigmoid(-x);
        double coef = sigmoid(x) - label;
        for (std::size_t k = 0; k < d; ++k) {
          grad_center[k] += coef * u[k];
          u[k] -= config.learning_rate * coef * v[k];
        }
      };
      update_target(o, 1.0);
      for (std::size_t ng : negs) update_target(ng, 0.0);
      for (std::size_t k = 0; k < d; ++k) v[k] -= config.learning_rate * grad_center[k];
    }
    epoch_loss.push_back(loss_sum / static_cast<double>(pairs.size()));
  }

  catalog::EmbeddingMatrix out(Modality::kPlaylist, config.dim);
  std::vector<float> row(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) row[k] = static_cast<float>(w_in[i * d + k]);
    out.add_row(vocab[i], row);
  }
  return TrainResult{std::move(out), std::move(epoch_loss)};
}

}  // namespace talkplay::item2vec
