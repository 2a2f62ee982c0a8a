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

#include "talkplay/seqmodel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "talkplay/binary_io.hpp"

namespace talkplay::seq {

void ModelConfig::validate() const {
  if (vocab_size == 0) throw InvalidArgument("model: vocab_size must be positive");
  if (d_model == 0 || n_layers == 0 || n_heads == 0) {
    throw InvalidArgument("model: d_model, n_layers and n_heads must be positive");
  }
  if (d_model % n_heads != 0) throw InvalidArgument("model: d_model must be divisible by n_heads");
  if (context_len < 8) throw InvalidArgument("model: context_len must be >= 8");
}

template <typename S>
Params<S> zeros(const ModelConfig& c) {
  c.validate();
  const Eigen::Index d = c.d_model, v = c.vocab_size, ff = 4 * d;
  Params<S> p;
  p.config = c;
  p.tok_emb = Mat<S>::Zero(v, d);
  p.pos_emb = Mat<S>::Zero(c.context_len, d);
  p.layers.resize(c.n_layers);
  for (auto& L : p.layers) {
    L.ln1_g = Mat<S>::Zero(1, d);
    L.ln1_b = Mat<S>::Zero(1, d);
    L.w_qkv = Mat<S>::Zero(d, 3 * d);
    L.b_qkv = Mat<S>::Zero(1, 3 * d);
    L.w_o = Mat<S>::Zero(d, d);
    L.b_o = Mat<S>::Zero(1, d);
    L.ln2_g = Mat<S>::Zero(1, d);
    L.ln2_b = Mat<S>::Zero(1, d);
    L.w_fc = Mat<S>::Zero(d, ff);
    L.b_fc = Mat<S>::Zero(1, ff);
    L.w_proj = Mat<S>::Zero(ff, d);
    L.b_proj = Mat<S>::Zero(1, d);
  }
  p.lnf_g = Mat<S>::Zero(1, d);
  p.lnf_b = Mat<S>::Zero(1, d);
  p.w_out = Mat<S>::Zero(d, v);
  return p;
}

template Params<float> zeros<float>(const ModelConfig&);
template Params<double> zeros<double>(const ModelConfig&);

namespace {

// Portable seeded standard normal (Box-Muller over mt19937_64).
class Gaussian {
 public:
  explicit Gaussian(std::uint64_t seed) : rng_(seed) {}
  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

 private:
  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

constexpr double kInitStd = 0.02;

}  // namespace

EmbeddingStats embedding_stats(const Params<float>& params, TokenId begin, TokenId end) {
  if (begin >= end || end > params.tok_emb.rows()) {
    throw InvalidArgument("embedding_stats: bad token range");
  }
  Eigen::MatrixXd rows = params.tok_emb.middleRows(begin, end - begin).cast<double>();
  EmbeddingStats s;
  s.mean = rows.colwise().mean().transpose();
  Eigen::MatrixXd centered = rows.rowwise() - s.mean.transpose();
  s.covariance = (centered.transpose() * centered) / static_cast<double>(rows.rows());
  return s;
}

Params<float> init_params(const ModelConfig& config, TokenId first_new_token,
                          const std::optional<EmbeddingStats>& base_stats) {
  Params<float> p = zeros<float>(config);
  const Eigen::Index d = config.d_model;
  Gaussian g(config.seed);
  auto fill = [&](Mat<float>& m, double stdev) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(g() * stdev);
  };
  first_new_token = std::min<TokenId>(first_new_token, config.vocab_size);

  // Draw factor A with A A^T = covariance before touching any weights, so a
  // bad covariance fails fast.
  Eigen::MatrixXd factor;
  if (base_stats) {
    const auto& cov = base_stats->covariance;
    if (base_stats->mean.size() != d) throw InvalidArgument("base mean dim != d_model");
    if (cov.rows() == 1 && cov.cols() == d) {
      factor = Eigen::MatrixXd::Zero(d, d);
      for (Eigen::Index i = 0; i < d; ++i) {
        if (!(cov(0, i) >= 0)) throw InvalidArgument("covariance diagonal must be >= 0");
        factor(i, i) = std::sqrt(cov(0, i));
      }
    } else if (cov.rows() == d && cov.cols() == d) {
      if (!cov.isApprox(cov.transpose(), 1e-9) && !(cov - cov.transpose()).isZero(1e-12)) {
        throw InvalidArgument("covariance must be symmetric");
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
      if (eig.info() != Eigen::Success) throw InvalidArgument("covariance decomposition failed");
      const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
      Eigen::VectorXd lambda = eig.eigenvalues();
      for (Eigen::Index i = 0; i < d; ++i) {
        if (lambda(i) < -1e-10 * scale) {
          throw InvalidArgument("covariance is not positive semi-definite");
        }
        lambda(i) = std::sqrt(std::max(0.0, lambda(i)));
      }
      factor = eig.eigenvectors() * lambda.asDiagonal();
    } else {
      throw InvalidArgument("covariance must be d x d or 1 x d");
    }
  }

  fill(p.tok_emb, kInitStd);
  if (base_stats) {
    Eigen::VectorXd z(d);
    for (TokenId t = first_new_token; t < config.vocab_size; ++t) {
      for (Eigen::Index i = 0; i < d; ++i) z(i) = g();
      Eigen::VectorXd row = base_stats->mean + factor * z;
      p.tok_emb.row(t) = row.transpose().cast<float>();
    }
  }
  fill(p.pos_emb, kInitStd);
  const double proj_std = kInitStd / std::sqrt(2.0 * config.n_layers);
  for (auto& L : p.layers) {
    L.ln1_g.setOnes();
    L.ln2_g.setOnes();
    fill(L.w_qkv, kInitStd);
    fill(L.w_o, proj_std);
    fill(L.w_fc, kInitStd);
    fill(L.w_proj, proj_std);
  }
  p.lnf_g.setOnes();
  fill(p.w_out, kInitStd);
  return p;
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

template <typename S>
using ColVec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

constexpr double kLnEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

template <typename S>
struct NormCache {
  Mat<S> xhat;
  ColVec<S> rstd;
};

template <typename S>
struct LayerCache {
  NormCache<S> n1, n2;
  Mat<S> h1, qkv, attn, h2, u, g;
  std::vector<Mat<S>> probs;
};

template <typename S>
struct Cache {
  std::vector<LayerCache<S>> layers;
  NormCache<S> nf;
  Mat<S> hf;
};

template <typename S>
void layer_norm(const Mat<S>& x, const Mat<S>& g, const Mat<S>& b, NormCache<S>& c, Mat<S>& y) {
  ColVec<S> mean = x.rowwise().mean();
  Mat<S> centered = x.colwise() - mean;
  ColVec<S> var = centered.array().square().rowwise().mean();
  c.rstd = (var.array() + static_cast<S>(kLnEps)).rsqrt();
  c.xhat = c.rstd.asDiagonal() * centered;
  y = (c.xhat.array().rowwise() * g.row(0).array()).rowwise() + b.row(0).array();
}

template <typename S>
Mat<S> layer_norm_backward(const Mat<S>& dy, const Mat<S>& g, const NormCache<S>& c, Mat<S>& dg,
                           Mat<S>& db) {
  dg += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  db += dy.colwise().sum();
  Mat<S> dxhat = dy.array().rowwise() * g.row(0).array();
  ColVec<S> m1 = dxhat.rowwise().mean();
  ColVec<S> m2 = (dxhat.array() * c.xhat.array()).rowwise().mean();
  Mat<S> inner = (dxhat.colwise() - m1) - (c.xhat.array().colwise() * m2.array()).matrix();
  return c.rstd.asDiagonal() * inner;
}

template <typename S>
S gelu(S x) {
  S t = std::tanh(static_cast<S>(kGeluC) * (x + static_cast<S>(kGeluA) * x * x * x));
  return static_cast<S>(0.5) * x * (static_cast<S>(1) + t);
}

template <typename S>
S gelu_grad(S x) {
  S inner = static_cast<S>(kGeluC) * (x + static_cast<S>(kGeluA) * x * x * x);
  S t = std::tanh(inner);
  S dinner = static_cast<S>(kGeluC) * (static_cast<S>(1) + static_cast<S>(3 * kGeluA) * x * x);
  return static_cast<S>(0.5) * (static_cast<S>(1) + t) +
         static_cast<S>(0.5) * x * (static_cast<S>(1) - t * t) * dinner;
}

template <typename S>
void check_ids(const Params<S>& p, std::span<const TokenId> ids) {
  if (ids.size() > p.config.context_len) {
    throw InvalidArgument("sequence of " + std::to_string(ids.size()) +
                          " tokens exceeds context length " +
                          std::to_string(p.config.context_len));
  }
  for (TokenId id : ids) {
    if (id >= p.config.vocab_size) {
      throw InvalidArgument("token id " + std::to_string(id) + " >= vocab size");
    }
  }
}

// Final hidden states (T x d) after the last layer norm.
template <typename S>
Mat<S> forward_hidden(const Params<S>& p, std::span<const TokenId> ids, Cache<S>* cache) {
  check_ids(p, ids);
  const Eigen::Index T = static_cast<Eigen::Index>(ids.size());
  const Eigen::Index d = p.config.d_model;
  const Eigen::Index H = p.config.n_heads;
  const Eigen::Index dh = d / H;
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

  Mat<S> x(T, d);
  for (Eigen::Index t = 0; t < T; ++t) x.row(t) = p.tok_emb.row(ids[t]) + p.pos_emb.row(t);

  if (cache) cache->layers.resize(p.layers.size());
  LayerCache<S> scratch;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& L = p.layers[l];
    LayerCache<S>& c = cache ? cache->layers[l] : scratch;
    layer_norm(x, L.ln1_g, L.ln1_b, c.n1, c.h1);
    c.qkv.noalias() = c.h1 * L.w_qkv;
    c.qkv.rowwise() += L.b_qkv.row(0);
    c.attn.resize(T, d);
    c.probs.resize(H);
    for (Eigen::Index h = 0; h < H; ++h) {
      auto q = c.qkv.middleCols(h * dh, dh);
      auto k = c.qkv.middleCols(d + h * dh, dh);
      auto v = c.qkv.middleCols(2 * d + h * dh, dh);
      Mat<S>& P = c.probs[h];
      P.noalias() = (q * k.transpose()) * scale;
      for (Eigen::Index i = 0; i < T; ++i) {
        S mx = P.row(i).head(i + 1).maxCoeff();
        S sum = 0;
        for (Eigen::Index j = 0; j <= i; ++j) {
          S e = std::exp(P(i, j) - mx);
          P(i, j) = e;
          sum += e;
        }
        P.row(i).head(i + 1) /= sum;
        P.row(i).tail(T - i - 1).setZero();
      }
      c.attn.middleCols(h * dh, dh).noalias() = P * v;
    }
    Mat<S> o = c.attn * L.w_o;
    o.rowwise() += L.b_o.row(0);
    x += o;
    layer_norm(x, L.ln2_g, L.ln2_b, c.n2, c.h2);
    c.u.noalias() = c.h2 * L.w_fc;
    c.u.rowwise() += L.b_fc.row(0);
    c.g = c.u.unaryExpr([](S v) { return gelu(v); });
    Mat<S> m = c.g * L.w_proj;
    m.rowwise() += L.b_proj.row(0);
    x += m;
  }
  Mat<S> hf;
  NormCache<S> nf;
  layer_norm(x, p.lnf_g, p.lnf_b, cache ? cache->nf : nf, hf);
  return hf;
}

// Adds the gradient of the summed NLL into `grads`; returns (sum, count).
template <typename S>
std::pair<double, std::size_t> accumulate(const Params<S>& p, std::span<const TokenId> ids,
                                          std::span<const std::uint8_t> mask, Params<S>& grads) {
  if (!mask.empty() && mask.size() != ids.size()) {
    throw InvalidArgument("loss mask length differs from sequence length");
  }
  const Eigen::Index T = static_cast<Eigen::Index>(ids.size());
  if (T < 2) {
    check_ids(p, ids);
    return {0.0, 0};
  }
  const Eigen::Index d = p.config.d_model;
  const Eigen::Index H = p.config.n_heads;
  const Eigen::Index dh = d / H;
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

  Cache<S> cache;
  Mat<S> hf = forward_hidden(p, ids, &cache);
  Mat<S> lg = hf * p.w_out;

  double nll = 0.0;
  std::size_t count = 0;
  Mat<S> dlogits = Mat<S>::Zero(T, lg.cols());
  for (Eigen::Index i = 0; i + 1 < T; ++i) {
    if (!mask.empty() && !mask[i + 1]) continue;
    auto row = lg.row(i);
    S mx = row.maxCoeff();
    auto e = (row.array() - mx).exp();
    S sum = e.sum();
    TokenId target = ids[i + 1];
    nll += static_cast<double>(std::log(sum) + mx - row(target));
    dlogits.row(i) = e / sum;
    dlogits(i, target) -= 1;
    ++count;
  }
  if (count == 0) return {0.0, 0};

  grads.w_out.noalias() += hf.transpose() * dlogits;
  Mat<S> dh_f = dlogits * p.w_out.transpose();
  Mat<S> dx = layer_norm_backward(dh_f, p.lnf_g, cache.nf, grads.lnf_g, grads.lnf_b);

  for (std::size_t li = p.layers.size(); li-- > 0;) {
    const auto& L = p.layers[li];
    auto& G = grads.layers[li];
    const auto& c = cache.layers[li];
    // MLP branch.
    G.w_proj.noalias() += c.g.transpose() * dx;
    G.b_proj += dx.colwise().sum();
    Mat<S> dg = dx * L.w_proj.transpose();
    Mat<S> du = dg.array() * c.u.unaryExpr([](S v) { return gelu_grad(v); }).array();
    G.w_fc.noalias() += c.h2.transpose() * du;
    G.b_fc += du.colwise().sum();
    Mat<S> dh2 = du * L.w_fc.transpose();
    dx += layer_norm_backward(dh2, L.ln2_g, c.n2, G.ln2_g, G.ln2_b);
    // Attention branch.
    G.w_o.noalias() += c.attn.transpose() * dx;
    G.b_o += dx.colwise().sum();
    Mat<S> dattn = dx * L.w_o.transpose();
    Mat<S> dqkv(T, 3 * d);
    for (Eigen::Index h = 0; h < H; ++h) {
      auto q = c.qkv.middleCols(h * dh, dh);
      auto k = c.qkv.middleCols(d + h * dh, dh);
      auto v = c.qkv.middleCols(2 * d + h * dh, dh);
      const Mat<S>& P = c.probs[h];
      auto da = dattn.middleCols(h * dh, dh);
      Mat<S> dP = da * v.transpose();
      dqkv.middleCols(2 * d + h * dh, dh).noalias() = P.transpose() * da;
      ColVec<S> rs = (dP.array() * P.array()).rowwise().sum();
      Mat<S> dS = (P.array() * (dP.colwise() - rs).array()) * scale;
      dqkv.middleCols(h * dh, dh).noalias() = dS * k;
      dqkv.middleCols(d + h * dh, dh).noalias() = dS.transpose() * q;
    }
    G.w_qkv.noalias() += c.h1.transpose() * dqkv;
    G.b_qkv += dqkv.colwise().sum();
    Mat<S> dh1 = dqkv * L.w_qkv.transpose();
    dx += layer_norm_backward(dh1, L.ln1_g, c.n1, G.ln1_g, G.ln1_b);
  }
  for (Eigen::Index t = 0; t < T; ++t) {
    grads.tok_emb.row(ids[t]) += dx.row(t);
    grads.pos_emb.row(t) += dx.row(t);
  }
  return {nll, count};
}

template <typename S>
void scale_params(Params<S>& p, S factor) {
  p.visit([&](const std::string&, Mat<S>& m) { m *= factor; });
}

}  // namespace

template <typename S>
LossAndGrad<S> forward_loss(const Params<S>& params, std::span<const TokenId> ids,
                            std::span<const std::uint8_t> mask) {
  LossAndGrad<S> out;
  out.grads = zeros<S>(params.config);
  auto [sum, count] = accumulate(params, ids, mask, out.grads);
  out.count = count;
  if (count > 0) {
    out.loss = sum / static_cast<double>(count);
    scale_params(out.grads, static_cast<S>(1.0 / static_cast<double>(count)));
  }
  return out;
}

template <typename S>
Mat<S> logits(const Params<S>& params, std::span<const TokenId> ids) {
  Mat<S> hf = forward_hidden<S>(params, ids, nullptr);
  return hf * params.w_out;
}

template <typename S>
RowVec<S> last_logits(const Params<S>& params, std::span<const TokenId> ids) {
  if (ids.empty()) throw InvalidArgument("last_logits: empty sequence");
  Mat<S> hf = forward_hidden<S>(params, ids, nullptr);
  return hf.row(hf.rows() - 1) * params.w_out;
}

template <typename S>
double loss_only(const Params<S>& params, std::span<const TokenId> ids,
                 std::span<const std::uint8_t> mask) {
  if (!mask.empty() && mask.size() != ids.size()) {
    throw InvalidArgument("loss mask length differs from sequence length");
  }
  if (ids.size() < 2) return 0.0;
  Mat<S> lg = logits(params, ids);
  double nll = 0.0;
  std::size_t count = 0;
  for (Eigen::Index i = 0; i + 1 < lg.rows(); ++i) {
    if (!mask.empty() && !mask[i + 1]) continue;
    auto row = lg.row(i);
    S mx = row.maxCoeff();
    nll += static_cast<double>(std::log((row.array() - mx).exp().sum()) + mx - row(ids[i + 1]));
    ++count;
  }
  return count ? nll / static_cast<double>(count) : 0.0;
}

template LossAndGrad<float> forward_loss<float>(const Params<float>&, std::span<const TokenId>,
                                                std::span<const std::uint8_t>);
template LossAndGrad<double> forward_loss<double>(const Params<double>&,
                                                  std::span<const TokenId>,
                                                  std::span<const std::uint8_t>);
template Mat<float> logits<float>(const Params<float>&, std::span<const TokenId>);
template Mat<double> logits<double>(const Params<double>&, std::span<const TokenId>);
template RowVec<float> last_logits<float>(const Params<float>&, std::span<const TokenId>);
template RowVec<double> last_logits<double>(const Params<double>&, std::span<const TokenId>);
template double loss_only<float>(const Params<float>&, std::span<const TokenId>,
                                 std::span<const std::uint8_t>);
template double loss_only<double>(const Params<double>&, std::span<const TokenId>,
                                  std::span<const std::uint8_t>);

// ---------------------------------------------------------------------------
// Training

TrainState make_train_state(Params<float> params) {
  TrainState s;
  s.opt.m = zeros<float>(params.config);
  s.opt.v = zeros<float>(params.config);
  s.params = std::move(params);
  return s;
}

namespace {

bool decays(const std::string& name) {
  auto dot = name.rfind('.');
  std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
  return leaf.rfind("w_", 0) == 0;
}

std::uint64_t epoch_seed(std::uint64_t seed, std::uint32_t epoch) {
  return mix_seed(seed, epoch);
}

void adamw_step(TrainState& state, Params<float>& grads, const TrainConfig& cfg) {
  if (cfg.grad_clip > 0) {
    double sq = 0.0;
    grads.visit([&](const std::string&, const Mat<float>& g) {
      sq += g.cast<double>().squaredNorm();
    });
    double norm = std::sqrt(sq);
    if (norm > cfg.grad_clip) scale_params(grads, static_cast<float>(cfg.grad_clip / norm));
  }
  ++state.opt.step;
  const double t = static_cast<double>(state.opt.step);
  const float b1 = static_cast<float>(cfg.beta1), b2 = static_cast<float>(cfg.beta2);
  const float c1 = static_cast<float>(1.0 / (1.0 - std::pow(cfg.beta1, t)));
  const float c2 = static_cast<float>(1.0 / (1.0 - std::pow(cfg.beta2, t)));
  const float lr = static_cast<float>(cfg.learning_rate);
  const float wd = static_cast<float>(cfg.weight_decay);
  const float eps = static_cast<float>(cfg.eps);

  std::vector<Mat<float>*> all, ms, vs, gs;
  std::vector<bool> decay;
  state.params.visit([&](const std::string& name, Mat<float>& m) {
    all.push_back(&m);
    decay.push_back(decays(name));
  });
  state.opt.m.visit([&](const std::string&, Mat<float>& m) { ms.push_back(&m); });
  state.opt.v.visit([&](const std::string&, Mat<float>& m) { vs.push_back(&m); });
  grads.visit([&](const std::string&, Mat<float>& m) { gs.push_back(&m); });
  for (std::size_t i = 0; i < all.size(); ++i) {
    auto& p = *all[i];
    auto& m = *ms[i];
    auto& v = *vs[i];
    const auto& g = *gs[i];
    m = b1 * m + (1 - b1) * g;
    v.array() = b2 * v.array() + (1 - b2) * g.array().square();
    if (decay[i] && wd > 0) p *= (1 - lr * wd);
    p.array() -= lr * (m.array() * c1) / ((v.array() * c2).sqrt() + eps);
  }
}

}  // namespace

TrainReport train(TrainState& state, std::span<const Example> corpus, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  if (corpus.empty()) throw InvalidArgument("train: empty corpus");
  if (!(cfg.learning_rate > 0)) throw InvalidArgument("train: learning_rate must be > 0");
  if (cfg.batch_size == 0) throw InvalidArgument("train: batch_size must be > 0");
  TrainReport report;
  Params<float> grads = zeros<float>(state.params.config);
  std::vector<std::size_t> order(corpus.size());
  for (std::uint32_t e = 0; e < cfg.epochs; ++e) {
    const std::uint32_t epoch = state.epochs_done;
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(epoch_seed(cfg.seed, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_sum = 0.0;
    std::size_t epoch_count = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      grads.visit([](const std::string&, Mat<float>& g) { g.setZero(); });
      double batch_sum = 0.0;
      std::size_t batch_count = 0;
      std::size_t end = std::min(order.size(), start + cfg.batch_size);
      for (std::size_t i = start; i < end; ++i) {
        const Example& ex = corpus[order[i]];
        auto [s, n] = accumulate(state.params, ex.ids, ex.mask, grads);
        batch_sum += s;
        batch_count += n;
      }
      if (batch_count == 0) continue;
      if (!std::isfinite(batch_sum)) {
        throw TrainingError("loss diverged (non-finite) at epoch " + std::to_string(epoch) +
                            ", optimizer step " + std::to_string(state.opt.step));
      }
      scale_params(grads, 1.0f / static_cast<float>(batch_count));
      adamw_step(state, grads, cfg);
      epoch_sum += batch_sum;
      epoch_count += batch_count;
    }
    double mean = epoch_count ? epoch_sum / static_cast<double>(epoch_count) : 0.0;
    report.epoch_loss.push_back(mean);
    ++state.epochs_done;
    if (on_epoch) on_epoch(epoch, mean);
  }
  return report;
}

double corpus_loss(const Params<float>& params, std::span<const Example> corpus) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& ex : corpus) {
    if (ex.ids.size() < 2) continue;
    std::size_t n = 0;
    for (std::size_t i = 1; i < ex.ids.size(); ++i) n += ex.mask.empty() || ex.mask[i];
    if (n == 0) continue;
    sum += loss_only(params, ex.ids, ex.mask) * static_cast<double>(n);
    count += n;
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

// ---------------------------------------------------------------------------
// Sampling

void SamplingConfig::validate() const {
  if (!(top_p > 0.0 && top_p <= 1.0)) throw InvalidArgument("top_p must be in (0, 1]");
  if (!(repetition_penalty > 0.0)) throw InvalidArgument("repetition_penalty must be > 0");
  if (!std::isfinite(temperature)) throw InvalidArgument("temperature must be finite");
}

void MusicGrammar::reset(std::span<const TokenId> prefix) {
  position_ = -1;
  std::size_t n = std::min<std::size_t>(prefix.size(), kNumModalities + 1);
  for (std::size_t back = 1; back <= n; ++back) {
    TokenId id = prefix[prefix.size() - back];
    if (id == vocab_.eom()) return;
    if (id == vocab_.som()) {
      position_ = static_cast<int>(back - 1);
      return;
    }
  }
}

void MusicGrammar::advance(TokenId id) {
  if (position_ < 0) {
    if (id == vocab_.som()) position_ = 0;
    return;
  }
  if (id == vocab_.eom()) {
    position_ = -1;
  } else {
    ++position_;
  }
}

void MusicGrammar::allowed(std::vector<std::uint8_t>& allowed) const {
  allowed.assign(vocab_.size(), 0);
  if (position_ < 0) {
    std::fill(allowed.begin(), allowed.end(), 1);
    for (TokenId id = vocab_.music_begin(); id < vocab_.music_end(); ++id) allowed[id] = 0;
    allowed[vocab_.eom()] = 0;
    allowed[vocab_.playlist_unk()] = 0;
    return;
  }
  if (position_ >= static_cast<int>(kNumModalities)) {
    allowed[vocab_.eom()] = 1;
    return;
  }
  Modality m = kModalityOrder[position_];
  auto [lo, hi] = vocab_.modality_range(m);
  for (TokenId id = lo; id < hi; ++id) allowed[id] = 1;
  if (m == Modality::kPlaylist) allowed[vocab_.playlist_unk()] = 1;
}

TokenId sample_from_logits(std::span<const double> logits, std::span<const TokenId> previous,
                           const SamplingConfig& sampling, std::mt19937_64& rng,
                           std::span<const std::uint8_t> allowed) {
  sampling.validate();
  const std::size_t V = logits.size();
  if (V == 0) throw InvalidArgument("sample: empty logits");
  if (!allowed.empty() && allowed.size() != V) throw InvalidArgument("sample: mask size mismatch");
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  std::vector<double> z(logits.begin(), logits.end());
  if (!allowed.empty()) {
    bool any = false;
    for (std::size_t i = 0; i < V; ++i) {
      if (!allowed[i]) z[i] = kNegInf;
      any = any || allowed[i];
    }
    if (!any) throw InvalidArgument("sample: no token allowed");
  }
  if (sampling.repetition_penalty != 1.0) {
    std::vector<bool> seen(V, false);
    for (TokenId id : previous) {
      if (id < V) seen[id] = true;
    }
    for (std::size_t i = 0; i < V; ++i) {
      if (!seen[i] || z[i] == kNegInf) continue;
      z[i] = z[i] > 0 ? z[i] / sampling.repetition_penalty : z[i] * sampling.repetition_penalty;
    }
  }
  auto argmax = [&] {
    std::size_t best = 0;
    for (std::size_t i = 1; i < V; ++i) {
      if (z[i] > z[best]) best = i;
    }
    return static_cast<TokenId>(best);
  };
  if (sampling.temperature <= 0.0) return argmax();

  double mx = z[argmax()];
  std::vector<std::pair<double, TokenId>> probs;
  probs.reserve(V);
  double total = 0.0;
  for (std::size_t i = 0; i < V; ++i) {
    if (z[i] == kNegInf) continue;
    double p = std::exp((z[i] - mx) / sampling.temperature);
    probs.emplace_back(p, static_cast<TokenId>(i));
    total += p;
  }
  std::stable_sort(probs.begin(), probs.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  // Smallest descending prefix reaching top_p of the mass; never empty.
  std::size_t keep = 0;
  double cum = 0.0;
  while (keep < probs.size()) {
    cum += probs[keep].first / total;
    ++keep;
    if (cum >= sampling.top_p) break;
  }
  double kept_mass = 0.0;
  for (std::size_t i = 0; i < keep; ++i) kept_mass += probs[i].first;
  double r = static_cast<double>(rng() >> 11) * 0x1.0p-53 * kept_mass;
  double acc = 0.0;
  for (std::size_t i = 0; i < keep; ++i) {
    acc += probs[i].first;
    if (r < acc) return probs[i].second;
  }
  return probs[keep - 1].second;
}

std::vector<TokenId> generate(const Params<float>& params, std::span<const TokenId> prompt,
                              const GenerateOptions& options, MusicGrammar* grammar) {
  options.sampling.validate();
  std::vector<TokenId> seq(prompt.begin(), prompt.end());
  std::vector<TokenId> out;
  if (seq.empty()) throw InvalidArgument("generate: empty prompt");
  check_ids(params, seq);
  std::mt19937_64 rng(options.seed);
  std::vector<std::uint8_t> allowed;
  if (grammar) grammar->reset(seq);
  while (out.size() < options.max_new && seq.size() < params.config.context_len) {
    RowVec<float> lg = last_logits(params, seq);
    std::vector<double> z(lg.data(), lg.data() + lg.size());
    if (grammar) grammar->allowed(allowed);
    TokenId next = sample_from_logits(z, out, options.sampling, rng,
                                      grammar ? std::span<const std::uint8_t>(allowed)
                                              : std::span<const std::uint8_t>());
    seq.push_back(next);
    out.push_back(next);
    if (grammar) grammar->advance(next);
    if (std::find(options.stop_tokens.begin(), options.stop_tokens.end(), next) !=
        options.stop_tokens.end()) {
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

std::optional<tok::Vocabulary> Checkpoint::vocabulary() const {
  if (vocab_k == 0) return std::nullopt;
  return tok::Vocabulary(vocab_base, vocab_k);
}

namespace {

constexpr std::string_view kCkptMagic = "TPCKPT1";

void write_tensors(binio::Writer& w, const Params<float>& p, const std::string& prefix) {
  p.visit([&](const std::string& name, const Mat<float>& m) {
    w.str16(prefix + name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m.rows()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m.cols()));
    w.array(std::span<const float>(m.data(), static_cast<std::size_t>(m.size())));
  });
}

void read_tensors(binio::Reader& r, Params<float>& p, const std::string& prefix) {
  p.visit([&](const std::string& name, Mat<float>& m) {
    std::string stored = r.str16();
    if (stored != prefix + name) {
      throw LoadError(r.what() + ": expected tensor " + prefix + name + ", found " + stored);
    }
    auto rows = r.get<std::uint32_t>();
    auto cols = r.get<std::uint32_t>();
    if (rows != m.rows() || cols != m.cols()) {
      throw LoadError(r.what() + ": tensor " + stored + " has unexpected shape");
    }
    r.array(std::span<float>(m.data(), static_cast<std::size_t>(m.size())));
  });
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  binio::Writer w(out);
  const auto& c = ckpt.state.params.config;
  w.magic(kCkptMagic);
  w.put<std::uint32_t>(c.vocab_size);
  w.put<std::uint32_t>(c.d_model);
  w.put<std::uint32_t>(c.n_layers);
  w.put<std::uint32_t>(c.n_heads);
  w.put<std::uint32_t>(c.context_len);
  w.put<std::uint64_t>(c.seed);
  w.put<std::uint32_t>(ckpt.vocab_base);
  w.put<std::uint32_t>(ckpt.vocab_k);
  w.put<std::uint32_t>(ckpt.state.epochs_done);
  w.put<std::uint64_t>(ckpt.state.opt.step);
  write_tensors(w, ckpt.state.params, "");
  write_tensors(w, ckpt.state.opt.m, "m/");
  write_tensors(w, ckpt.state.opt.v, "v/");
  w.check();
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<ModelConfig>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  binio::Reader r(in, path.string());
  r.expect_magic(kCkptMagic);
  ModelConfig c;
  c.vocab_size = r.get<std::uint32_t>();
  c.d_model = r.get<std::uint32_t>();
  c.n_layers = r.get<std::uint32_t>();
  c.n_heads = r.get<std::uint32_t>();
  c.context_len = r.get<std::uint32_t>();
  c.seed = r.get<std::uint64_t>();
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
  if (expected && !(*expected == c)) {
    throw LoadError(path.string() + ": stored model config does not match the requested one");
  }
  Checkpoint ckpt;
  ckpt.vocab_base = r.get<std::uint32_t>();
  ckpt.vocab_k = r.get<std::uint32_t>();
  ckpt.state = make_train_state(zeros<float>(c));
  ckpt.state.epochs_done = r.get<std::uint32_t>();
  ckpt.state.opt.step = r.get<std::uint64_t>();
  read_tensors(r, ckpt.state.params, "");
  read_tensors(r, ckpt.state.opt.m, "m/");
  read_tensors(r, ckpt.state.opt.v, "v/");
  if (!r.at_end()) throw LoadError(path.string() + ": trailing bytes");
  return ckpt;
}

void save_corpus(const tok::Vocabulary& vocab, std::span<const Example> corpus,
                 const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "#tpcorpus base=" << vocab.base_size() << " k=" << vocab.k() << '\n';
  for (const auto& ex : corpus) {
    if (!ex.mask.empty() && ex.mask.size() != ex.ids.size()) {
      throw InvalidArgument("corpus: mask length differs from ids");
    }
    for (std::size_t i = 0; i < ex.ids.size(); ++i) out << (i ? " " : "") << ex.ids[i];
    out << '\t';
    for (std::size_t i = 0; i < ex.ids.size(); ++i) {
      out << (ex.mask.empty() || ex.mask[i] ? '1' : '0');
    }
    out << '\n';
  }
  if (!out) throw Error("cannot write " + path.string());
}

std::pair<tok::Vocabulary, std::vector<Example>> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  std::string line;
  unsigned base = 0, k = 0;
  if (!std::getline(in, line) || std::sscanf(line.c_str(), "#tpcorpus base=%u k=%u", &base, &k) != 2) {
    throw ParseError(path.string() + ":1: expected '#tpcorpus base=B k=K' header");
  }
  tok::Vocabulary vocab(base, k);
  std::vector<Example> corpus;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto where = path.string() + ":" + std::to_string(line_no);
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(where + ": missing tab before mask");
    Example ex;
    std::istringstream ids(line.substr(0, tab));
    std::string tokstr;
    while (ids >> tokstr) {
      std::uint32_t id = 0;
      auto [end, ec] = std::from_chars(tokstr.data(), tokstr.data() + tokstr.size(), id);
      if (ec != std::errc() || end != tokstr.data() + tokstr.size()) {
        throw ParseError(where + ": bad token id '" + tokstr + "'");
      }
      if (id >= vocab.size()) throw ParseError(where + ": token id " + tokstr + " out of range");
      ex.ids.push_back(id);
    }
    std::string mask = line.substr(tab + 1);
    if (mask.size() != ex.ids.size()) throw ParseError(where + ": mask length differs from ids");
    for (char c : mask) {
      if (c != '0' && c != '1') throw ParseError(where + ": mask must be 0/1");
      ex.mask.push_back(c == '1');
    }
    corpus.push_back(std::move(ex));
  }
  return {vocab, std::move(corpus)};
}

}  // namespace talkplay::seq
