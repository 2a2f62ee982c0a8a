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
#include <fstream>
#include <map>

#include "talkplay/seqmodel.hpp"
#include "test_util.hpp"

using namespace talkplay;
using namespace talkplay::seq;
using tok::TokenId;

namespace {

ModelConfig tiny_config(std::uint32_t vocab = 40) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.d_model = 16;
  c.n_layers = 2;
  c.n_heads = 2;
  c.context_len = 16;
  c.seed = 3;
  return c;
}

std::vector<Example> toy_corpus() {
  // Two deterministic patterns the model can memorize.
  std::vector<Example> out;
  for (int r = 0; r < 6; ++r) {
    out.push_back({{1, 2, 3, 4, 5, 6, 7, 8}, {}});
    out.push_back({{9, 8, 7, 6, 5, 4, 3, 2}, {}});
  }
  return out;
}

}  // namespace

TEST_CASE("config validation") {
  auto c = tiny_config();
  CHECK_NOTHROW(c.validate());
  c.n_heads = 3;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = tiny_config();
  c.context_len = 4;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("logits are causal") {
  auto p = init_params(tiny_config(), 40, std::nullopt);
  std::vector<TokenId> a = {1, 2, 3, 4, 5}, b = {1, 2, 3, 9, 9};
  auto la = logits(p, std::span<const TokenId>(a));
  auto lb = logits(p, std::span<const TokenId>(b));
  CHECK(la.rows() == 5);
  CHECK(la.cols() == 40);
  CHECK((la.topRows(3) - lb.topRows(3)).cwiseAbs().maxCoeff() == 0.0f);
  CHECK((la.row(3) - lb.row(3)).cwiseAbs().maxCoeff() > 0.0f);
  CHECK((last_logits(p, std::span<const TokenId>(a)) - la.row(4)).cwiseAbs().maxCoeff() < 1e-5f);
  std::vector<TokenId> too_long(17, 1);
  CHECK_THROWS_AS(logits(p, std::span<const TokenId>(too_long)), InvalidArgument);
  std::vector<TokenId> bad = {1, 40};
  CHECK_THROWS_AS(logits(p, std::span<const TokenId>(bad)), InvalidArgument);
}

TEST_CASE("analytic gradients match finite differences") {
  auto c = tiny_config(12);
  c.context_len = 8;
  auto p = cast_params<double>(init_params(c, 12, std::nullopt));
  // Larger weights than the init scale make the check sensitive.
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 0.3);
  p.visit([&](const std::string&, auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] += n(rng);
  });
  std::vector<TokenId> ids = {1, 5, 3, 7, 2, 11};
  std::vector<std::uint8_t> mask = {1, 1, 0, 1, 1, 1};
  auto g = forward_loss(p, std::span<const TokenId>(ids), std::span<const std::uint8_t>(mask));
  CHECK(g.count == 4);
  CHECK(g.loss == doctest::Approx(loss_only(p, std::span<const TokenId>(ids),
                                            std::span<const std::uint8_t>(mask))));
  double worst = 0;
  const double h = 1e-5;
  std::vector<Mat<double>*> tensors;
  std::vector<const Mat<double>*> grads;
  p.visit([&](const std::string&, Mat<double>& t) { tensors.push_back(&t); });
  g.grads.visit([&](const std::string&, const Mat<double>& t) { grads.push_back(&t); });
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    auto& t = *tensors[k];
    for (Eigen::Index i = 0; i < t.size(); i += std::max<Eigen::Index>(1, t.size() / 7)) {
      const double orig = t.data()[i];
      t.data()[i] = orig + h;
      const double up = loss_only(p, std::span<const TokenId>(ids), std::span<const std::uint8_t>(mask));
      t.data()[i] = orig - h;
      const double down = loss_only(p, std::span<const TokenId>(ids), std::span<const std::uint8_t>(mask));
      t.data()[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double analytic = grads[k]->data()[i];
      const double rel = std::abs(numeric - analytic) / std::max(1e-6, std::abs(numeric) + std::abs(analytic));
      worst = std::max(worst, rel);
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("new-token initialization draws from the given distribution") {
  auto c = tiny_config(200);
  c.d_model = 4;
  c.n_heads = 1;
  EmbeddingStats stats{Eigen::VectorXd::Constant(4, 0.5), Eigen::MatrixXd::Identity(4, 4) * 0.0};
  auto p = init_params(c, 100, stats);
  for (Eigen::Index r = 100; r < 200; ++r) {
    for (Eigen::Index d = 0; d < 4; ++d) CHECK(p.tok_emb(r, d) == 0.5f);
  }
  CHECK(std::abs(p.tok_emb(0, 0)) < 0.2f);
  EmbeddingStats bad{Eigen::VectorXd::Zero(4), -Eigen::MatrixXd::Identity(4, 4)};
  CHECK_THROWS_AS(init_params(c, 100, bad), InvalidArgument);
  EmbeddingStats wrong{Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3)};
  CHECK_THROWS_AS(init_params(c, 100, wrong), InvalidArgument);

  auto est = embedding_stats(p, 100, 200);
  CHECK(est.mean(2) == doctest::Approx(0.5));
  CHECK(est.covariance.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("training memorizes a toy corpus and resumes exactly") {
  auto corpus = toy_corpus();
  auto state = make_train_state(init_params(tiny_config(), 40, std::nullopt));
  const double before = corpus_loss(state.params, corpus);
  TrainConfig tc;
  tc.learning_rate = 3e-3;
  tc.batch_size = 4;
  tc.epochs = 30;
  tc.seed = 2;
  auto report = train(state, corpus, tc);
  CHECK(report.epoch_loss.size() == 30);
  CHECK(state.epochs_done == 30);
  CHECK(corpus_loss(state.params, corpus) < 0.5 * before);

  // 4 + 2 epochs from a saved checkpoint equal 6 straight epochs.
  testing::TempDir dir("ckpt");
  tc.epochs = 6;
  auto straight = make_train_state(init_params(tiny_config(), 40, std::nullopt));
  train(straight, corpus, tc);
  auto resumed = make_train_state(init_params(tiny_config(), 40, std::nullopt));
  tc.epochs = 4;
  train(resumed, corpus, tc);
  save_checkpoint({resumed, 0, 0}, dir / "m.ckpt");
  auto loaded = load_checkpoint(dir / "m.ckpt").state;
  tc.epochs = 2;
  train(loaded, corpus, tc);
  CHECK(loaded.opt.step == straight.opt.step);
  CHECK((loaded.params.w_out - straight.params.w_out).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("checkpoint round trip and config check") {
  testing::TempDir dir("ckpt2");
  Checkpoint ck{make_train_state(init_params(tiny_config(), 40, std::nullopt)), 20, 4};
  ck.state.epochs_done = 3;
  save_checkpoint(ck, dir / "a.ckpt");
  auto back = load_checkpoint(dir / "a.ckpt", tiny_config());
  CHECK(back.state.params.config == ck.state.params.config);
  CHECK(back.state.epochs_done == 3);
  CHECK(back.vocabulary() == tok::Vocabulary(20, 4));
  CHECK((back.state.params.tok_emb - ck.state.params.tok_emb).cwiseAbs().maxCoeff() == 0.0f);
  auto other = tiny_config();
  other.d_model = 32;
  CHECK_THROWS_AS(load_checkpoint(dir / "a.ckpt", other), LoadError);
  std::filesystem::resize_file(dir / "a.ckpt", 100);
  CHECK_THROWS_AS(load_checkpoint(dir / "a.ckpt"), LoadError);
}

TEST_CASE("corpus file round trip") {
  testing::TempDir dir("corpus");
  tok::Vocabulary v(256, 2);
  std::vector<Example> c = {{{1, 2, 268}, {0, 1, 1}}, {{265, 10}, {1, 1}}};
  save_corpus(v, c, dir / "c.txt");
  auto [v2, c2] = load_corpus(dir / "c.txt");
  CHECK(v2 == v);
  REQUIRE(c2.size() == 2);
  CHECK(c2[0].ids == c[0].ids);
  CHECK(c2[0].mask == c[0].mask);
  std::ofstream(dir / "bad.txt") << "#tpcorpus base=256 k=2\n1 2 999\t111\n";
  CHECK_THROWS_WITH_AS(load_corpus(dir / "bad.txt"), doctest::Contains("2"), ParseError);
}

TEST_CASE("nucleus sampling frequencies") {
  // softmax(log p) = p; with top_p = 0.75 the nucleus is {0.5, 0.3}.
  std::vector<double> logits = {std::log(0.5), std::log(0.3), std::log(0.15), std::log(0.05)};
  SamplingConfig s{1.0, 0.75, 1.0};
  std::mt19937_64 rng(7);
  std::map<TokenId, int> counts;
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++counts[sample_from_logits(logits, {}, s, rng)];
  CHECK(std::abs(counts[0] / double(n) - 0.625) < 0.02);
  CHECK(std::abs(counts[1] / double(n) - 0.375) < 0.02);
  CHECK(counts[2] == 0);
  CHECK(counts[3] == 0);

  SamplingConfig greedy{0.0, 0.9, 1.0};
  CHECK(sample_from_logits(std::vector<double>{0.1, 2.0, 1.9}, {}, greedy, rng) == 1);
  std::vector<std::uint8_t> allowed = {1, 0, 1};
  CHECK(sample_from_logits(std::vector<double>{0.1, 2.0, 1.9}, {}, greedy, rng, allowed) == 2);
  SamplingConfig penalized{0.0, 1.0, 2.0};
  std::vector<TokenId> prev = {1};
  CHECK(sample_from_logits(std::vector<double>{0.1, 2.0, 1.9}, prev, penalized, rng) == 2);
  CHECK_THROWS_AS((SamplingConfig{1.0, 0.0, 1.0}.validate()), InvalidArgument);
  CHECK_THROWS_AS((SamplingConfig{1.0, 0.9, 0.0}.validate()), InvalidArgument);
}

TEST_CASE("grammar-constrained generation yields valid blocks") {
  tok::Vocabulary v(256, 3);
  auto c = tiny_config(v.size());
  auto p = init_params(c, 256, std::nullopt);
  MusicGrammar g(v);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::vector<TokenId> prompt = {v.user(), 'h', 'i', v.som()};
    GenerateOptions opts;
    opts.max_new = 6;
    opts.seed = seed;
    opts.sampling = {1.5, 1.0, 1.0};
    auto out = generate(p, prompt, opts, &g);
    REQUIRE(out.size() == 6);
    tok::MusicTokenSeq seq;
    std::copy(out.begin(), out.begin() + 5, seq.ids.begin());
    CHECK(tok::is_valid_item(v, seq));
    CHECK(out[5] == v.eom());
  }
  GenerateOptions stop;
  stop.max_new = 50;
  stop.stop_tokens = {v.som()};
  std::vector<TokenId> prompt = {v.user()};
  auto out = generate(p, prompt, stop, nullptr);
  CHECK(out.size() <= 15);
  if (out.size() < 15 && !out.empty()) CHECK(out.back() == v.som());
}
