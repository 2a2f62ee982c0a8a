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
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "talkplay/tokenizer.hpp"

// A small pre-norm decoder-only transformer over the expanded vocabulary:
// learned positional embeddings, fused QKV attention, GELU MLP (4x width),
// final layer norm and an untied output projection.
namespace talkplay::seq {

using tok::TokenId;

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

struct ModelConfig {
  std::uint32_t vocab_size = 0;
  std::uint32_t d_model = 128;
  std::uint32_t n_layers = 4;
  std::uint32_t n_heads = 4;
  std::uint32_t context_len = 256;
  std::uint64_t seed = 0;

  // Throws InvalidArgument when d_model % n_heads != 0, context_len < 8 or
  // any size is zero.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename S>
struct LayerParams {
  Mat<S> ln1_g, ln1_b;
  Mat<S> w_qkv, b_qkv;  // d x 3d, 1 x 3d
  Mat<S> w_o, b_o;      // d x d
  Mat<S> ln2_g, ln2_b;
  Mat<S> w_fc, b_fc;      // d x 4d
  Mat<S> w_proj, b_proj;  // 4d x d
};

template <typename S>
struct Params {
  ModelConfig config;
  Mat<S> tok_emb;  // V x d
  Mat<S> pos_emb;  // C x d
  std::vector<LayerParams<S>> layers;
  Mat<S> lnf_g, lnf_b;
  Mat<S> w_out;  // d x V

  // Calls fn(name, tensor) for every tensor in a fixed order.
  template <typename Fn>
  void visit(Fn&& fn);
  template <typename Fn>
  void visit(Fn&& fn) const;

  std::size_t parameter_count() const;
};

// Allocates correctly-shaped zero tensors.
template <typename S>
Params<S> zeros(const ModelConfig& config);

template <typename To, typename From>
Params<To> cast_params(const Params<From>& p);

// Mean and covariance of an embedding table. The covariance may be given as
// a full d x d matrix or as a 1 x d diagonal.
struct EmbeddingStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

EmbeddingStats embedding_stats(const Params<float>& params, TokenId begin, TokenId end);

// Token embeddings of ids < first_new_token and all other weights use the
// seeded N(0, 0.02^2) scheme. Ids >= first_new_token (music and special
// tokens) are drawn from N(mean, covariance) when `base_stats` is given.
// Throws InvalidArgument for a covariance that is not positive semi-definite
// or shapes that do not match d_model.
Params<float> init_params(const ModelConfig& config, TokenId first_new_token,
                          const std::optional<EmbeddingStats>& base_stats);

// Mean cross-entropy of predicting ids[j] from ids[<j] over positions j >= 1
// with mask[j] != 0, and its gradient. An empty mask means all ones.
template <typename S>
struct LossAndGrad {
  double loss = 0.0;
  std::size_t count = 0;
  Params<S> grads;
};

template <typename S>
LossAndGrad<S> forward_loss(const Params<S>& params, std::span<const TokenId> ids,
                            std::span<const std::uint8_t> mask);

// Loss only (no gradient).
template <typename S>
double loss_only(const Params<S>& params, std::span<const TokenId> ids,
                 std::span<const std::uint8_t> mask);

// T x V logits for every position.
template <typename S>
Mat<S> logits(const Params<S>& params, std::span<const TokenId> ids);

// Logits at the last position only.
template <typename S>
RowVec<S> last_logits(const Params<S>& params, std::span<const TokenId> ids);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  double learning_rate = 1e-4;
  std::uint32_t batch_size = 8;
  std::uint32_t epochs = 1;
  double weight_decay = 0.0;
  double grad_clip = 1.0;  // global L2 norm; <= 0 disables
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
};

struct Example {
  std::vector<TokenId> ids;
  std::vector<std::uint8_t> mask;  // empty = all tokens
};

struct OptimizerState {
  Params<float> m;
  Params<float> v;
  std::uint64_t step = 0;
};

// Everything needed to resume training.
struct TrainState {
  Params<float> params;
  OptimizerState opt;
  std::uint32_t epochs_done = 0;
};

TrainState make_train_state(Params<float> params);

struct TrainReport {
  std::vector<double> epoch_loss;  // token-weighted mean loss seen during each epoch
};

using EpochCallback = std::function<void(std::uint32_t epoch, double loss)>;

// Runs `config.epochs` further epochs of AdamW (decoupled weight decay on
// the weight matrices only). Epoch e shuffles with a seed derived from
// (config.seed, e), so interrupted and resumed runs match. Throws
// TrainingError if the loss becomes non-finite.
TrainReport train(TrainState& state, std::span<const Example> corpus, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

// Training corpus file: "#tpcorpus base=B k=K" then one example per line,
// space-separated ids, a tab and the mask as a string of 0/1 characters.
void save_corpus(const tok::Vocabulary& vocab, std::span<const Example> corpus,
                 const std::filesystem::path& path);
// Throws ParseError naming the line for malformed records or ids outside the
// vocabulary.
std::pair<tok::Vocabulary, std::vector<Example>> load_corpus(const std::filesystem::path& path);

// Token-weighted mean loss over a corpus.
double corpus_loss(const Params<float>& params, std::span<const Example> corpus);

// ---------------------------------------------------------------------------
// Sampling

struct SamplingConfig {
  double temperature = 1.0;  // <= 0 selects greedy argmax decoding
  double top_p = 0.9;
  double repetition_penalty = 1.0;

  void validate() const;
};

// Forces well-formed music blocks: after <start_of_music> the next five ids
// must come from the modality ranges in order (the playlist slot also
// accepts <|playlist-unk|>), then <end_of_music>. Outside a block, music ids,
// unk and <end_of_music> are masked out.
class MusicGrammar {
 public:
  explicit MusicGrammar(tok::Vocabulary vocab) : vocab_(vocab) {}

  // Derives the block position from the tail of an existing sequence.
  void reset(std::span<const TokenId> prefix);
  void advance(TokenId id);
  // allowed[id] = 1 when `id` may be emitted next.
  void allowed(std::vector<std::uint8_t>& allowed) const;
  bool inside_block() const { return position_ >= 0; }

 private:
  tok::Vocabulary vocab_;
  int position_ = -1;  // tokens emitted since <start_of_music>, -1 outside
};

// One sampling step over raw logits. `previous` are the ids generated so far
// in this completion (for the repetition penalty); `allowed` may be empty.
TokenId sample_from_logits(std::span<const double> logits, std::span<const TokenId> previous,
                           const SamplingConfig& sampling, std::mt19937_64& rng,
                           std::span<const std::uint8_t> allowed = {});

struct GenerateOptions {
  SamplingConfig sampling;
  std::size_t max_new = 64;
  std::uint64_t seed = 0;
  std::vector<TokenId> stop_tokens;  // generation ends after emitting one
};

// Autoregressive continuation of `prompt` (returns only the new ids). Stops
// at max_new, a stop token or the context length.
std::vector<TokenId> generate(const Params<float>& params, std::span<const TokenId> prompt,
                              const GenerateOptions& options, MusicGrammar* grammar);

// ---------------------------------------------------------------------------
// Checkpoints

struct Checkpoint {
  TrainState state;
  std::uint32_t vocab_base = 0;  // 0 when unknown
  std::uint32_t vocab_k = 0;

  std::optional<tok::Vocabulary> vocabulary() const;
};

// "TPCKPT1" container: config header, vocab header, epochs/step, then named
// tensors (u16 name, u32 rows, u32 cols, float32 payload) for the
// parameters followed by the "m/" and "v/" optimizer moments.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// Throws LoadError on truncation or when `expected` differs from the stored
// config.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<ModelConfig>& expected = std::nullopt);

// ---------------------------------------------------------------------------

template <typename S>
template <typename Fn>
void Params<S>::visit(Fn&& fn) {
  fn(std::string("tok_emb"), tok_emb);
  fn(std::string("pos_emb"), pos_emb);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& L = layers[l];
    std::string p = "layers." + std::to_string(l) + ".";
    fn(p + "ln1_g", L.ln1_g);
    fn(p + "ln1_b", L.ln1_b);
    fn(p + "w_qkv", L.w_qkv);
    fn(p + "b_qkv", L.b_qkv);
    fn(p + "w_o", L.w_o);
    fn(p + "b_o", L.b_o);
    fn(p + "ln2_g", L.ln2_g);
    fn(p + "ln2_b", L.ln2_b);
    fn(p + "w_fc", L.w_fc);
    fn(p + "b_fc", L.b_fc);
    fn(p + "w_proj", L.w_proj);
    fn(p + "b_proj", L.b_proj);
  }
  fn(std::string("lnf_g"), lnf_g);
  fn(std::string("lnf_b"), lnf_b);
  fn(std::string("w_out"), w_out);
}

template <typename S>
template <typename Fn>
void Params<S>::visit(Fn&& fn) const {
  const_cast<Params<S>*>(this)->visit(
      [&](const std::string& name, Mat<S>& m) { fn(name, static_cast<const Mat<S>&>(m)); });
}

template <typename S>
std::size_t Params<S>::parameter_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Mat<S>& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

template <typename To, typename From>
Params<To> cast_params(const Params<From>& p) {
  Params<To> out = zeros<To>(p.config);
  std::vector<const Mat<From>*> src;
  p.visit([&](const std::string&, const Mat<From>& m) { src.push_back(&m); });
  std::size_t i = 0;
  out.visit([&](const std::string&, Mat<To>& m) { m = src[i++]->template cast<To>(); });
  return out;
}

}  // namespace talkplay::seq
