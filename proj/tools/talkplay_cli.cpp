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

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "talkplay/bm25.hpp"
#include "talkplay/catalog.hpp"
#include "talkplay/config.hpp"
#include "talkplay/datasynth.hpp"
#include "talkplay/evalharness.hpp"
#include "talkplay/fixture.hpp"
#include "talkplay/item2vec.hpp"
#include "talkplay/llm_client.hpp"
#include "talkplay/quantizer.hpp"
#include "talkplay/render.hpp"
#include "talkplay/retrieval.hpp"
#include "talkplay/seqmodel.hpp"
#include "talkplay/service.hpp"
#include "talkplay/tokenizer.hpp"

// After Eigen: <resolv.h> defines a _res macro that breaks Eigen's headers.
#include <httplib.h>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace talkplay;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

// items.tok with the vocabulary recorded in its header.
std::pair<tok::Vocabulary, tok::ItemTokens> load_items(const std::string& path) {
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  unsigned base = 0, k = 0;
  if (std::sscanf(header.c_str(), "#tpitems base=%u k=%u", &base, &k) != 2) {
    throw ParseError(path + ":1: expected '#tpitems base=B k=K'");
  }
  tok::Vocabulary vocab(base, k);
  return {vocab, tok::load_item_tokens(vocab, path)};
}

// Sorts the inputs into modality order and checks that each appears once.
template <typename T>
std::vector<T> by_modality(std::vector<T> items, Modality (*modality)(const T&)) {
  std::vector<T> out;
  for (Modality m : kModalityOrder) {
    auto count = std::count_if(items.begin(), items.end(), [&](const T& x) { return modality(x) == m; });
    if (count != 1) {
      throw InvalidArgument("need exactly one input for modality " + std::string(modality_name(m)));
    }
    out.push_back(*std::find_if(items.begin(), items.end(),
                                [&](const T& x) { return modality(x) == m; }));
  }
  return out;
}

std::vector<catalog::Playlist> select_playlists(const catalog::Catalog& cat,
                                                const std::string& split_path,
                                                const std::string& subset) {
  std::vector<catalog::Playlist> out;
  if (split_path.empty()) return cat.playlists();
  auto split = catalog::split_from_json(read_file(split_path));
  const auto& ids = subset == "test" ? split.test_playlists : split.train_playlists;
  for (const auto& p : cat.playlists()) {
    if (ids.contains(p.playlist_id)) out.push_back(p);
  }
  return out;
}

std::unordered_map<std::string, double> popularity_map(const catalog::Catalog& cat) {
  std::unordered_map<std::string, double> pop;
  for (const auto& t : cat.tracks()) pop[t.track_id] = t.popularity.value_or(0.0);
  return pop;
}

seq::SamplingConfig sampling_from(double temperature, double top_p, double penalty) {
  seq::SamplingConfig s{temperature, top_p, penalty};
  s.validate();
  return s;
}

struct SamplingFlags {
  double temperature = 1.0;
  double top_p = 0.9;
  double repetition_penalty = 1.0;

  void add(CLI::App* app) {
    app->add_option("--temperature", temperature, "Sampling temperature; <= 0 is greedy");
    app->add_option("--top-p", top_p, "Nucleus mass");
    app->add_option("--repetition-penalty", repetition_penalty, "Penalty on generated ids");
  }
  seq::SamplingConfig config() const { return sampling_from(temperature, top_p, repetition_penalty); }
};

// ---------------------------------------------------------------------------

void add_catalog(CLI::App& app) {
  auto* cat = app.add_subcommand("catalog", "Catalog validation and splitting")->require_subcommand(1);

  auto* validate = cat->add_subcommand("validate", "Load and validate a catalog directory");
  static std::string dir;
  validate->add_option("dir", dir, "Catalog directory")->required();
  validate->callback([] {
    auto c = catalog::load_catalog(dir);
    std::cout << "ok: " << c.tracks().size() << " tracks, " << c.playlists().size()
              << " playlists\n";
  });

  auto* split = cat->add_subcommand("split", "Chronological train/test split");
  static std::string split_dir, out;
  static std::size_t test_size = 0;
  static std::uint64_t seed = 0;
  split->add_option("dir", split_dir, "Catalog directory")->required();
  split->add_option("--test-size", test_size, "Test playlists, all from the latest date")->required();
  split->add_option("--seed", seed, "Sampling seed");
  split->add_option("--out", out, "Output JSON")->required();
  split->callback([] {
    auto c = catalog::load_catalog(split_dir);
    auto s = catalog::chronological_split(c.playlists(), test_size, seed);
    write_file(out, catalog::split_to_json(s) + "\n");
    std::cout << s.train_playlists.size() << " train / " << s.test_playlists.size()
              << " test playlists, " << s.cold_tracks.size() << " cold tracks\n";
  });
}

void add_item2vec(CLI::App& app) {
  auto* i2v = app.add_subcommand("item2vec", "Playlist co-occurrence embeddings")->require_subcommand(1);
  auto* train = i2v->add_subcommand("train", "Train skip-gram embeddings on playlists");
  static std::string dir, out, split, subset = "train";
  static item2vec::SkipGramConfig cfg;
  train->add_option("catalog", dir, "Catalog directory")->required();
  train->add_option("--dim", cfg.dim, "Embedding width");
  train->add_option("--epochs", cfg.epochs, "Passes over all pairs");
  train->add_option("--negatives", cfg.negatives_per_positive, "Negatives per pair");
  train->add_option("--lr", cfg.learning_rate, "Learning rate");
  train->add_option("--seed", cfg.seed, "Seed");
  train->add_option("--split", split, "Split JSON; trains on its train playlists");
  train->add_option("--out", out, "Output .tpemb")->required();
  train->callback([] {
    auto c = catalog::load_catalog(dir);
    auto playlists = select_playlists(c, split, subset);
    auto result = item2vec::train_item2vec(playlists, cfg);
    catalog::save_embeddings(result.embeddings, out);
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
      std::cout << "epoch " << e + 1 << " loss " << result.epoch_loss[e] << "\n";
    }
    std::cout << result.embeddings.rows() << " rows written to " << out << "\n";
  });
}

void add_quantize(CLI::App& app) {
  auto* q = app.add_subcommand("quantize", "K-means codebooks")->require_subcommand(1);
  auto* fit = q->add_subcommand("fit", "Fit a codebook to one embedding file");
  static std::string emb, out;
  static quant::KMeansOptions opts;
  fit->add_option("embeddings", emb, "Embedding file")->required();
  fit->add_option("--k", opts.k, "Clusters");
  fit->add_option("--seed", opts.seed, "Seed");
  fit->add_option("--max-iters", opts.max_iters, "Iteration cap");
  fit->add_option("--tol", opts.tol, "Stop when every centroid moves less than this");
  fit->add_option("--out", out, "Output .cbk")->required();
  fit->callback([] {
    auto m = catalog::load_embeddings(emb);
    auto r = quant::fit_kmeans(m, opts);
    quant::save_codebook(r.codebook, out);
    std::cout << modality_name(m.modality()) << ": k=" << r.codebook.k << " inertia "
              << r.codebook.inertia << " after " << r.iterations << " iterations\n";
  });

  auto* assign = q->add_subcommand("assign", "Assign every row to its nearest centroid");
  static std::string cbk, emb2, out2;
  assign->add_option("codebook", cbk, "Codebook file")->required();
  assign->add_option("embeddings", emb2, "Embedding file")->required();
  assign->add_option("--out", out2, "Output TSV (track_id, cluster)")->required();
  assign->callback([] {
    auto book = quant::load_codebook(cbk);
    auto m = catalog::load_embeddings(emb2, book.modality);
    std::ostringstream os;
    os << "track_id\tcluster\n";
    for (std::size_t i = 0; i < m.rows(); ++i) {
      os << m.ids()[i] << '\t' << quant::assign(book, m.row(i)) << '\n';
    }
    write_file(out2, os.str());
  });
}

void add_tokenize(CLI::App& app) {
  auto* t = app.add_subcommand("tokenize", "Item tokens and training corpora")->require_subcommand(1);

  auto* items = t->add_subcommand("items", "Map every track to its five music tokens");
  static std::vector<std::string> inputs;
  static std::string out, catalog_dir;
  static std::uint32_t base = 256;
  items->add_option("inputs", inputs, "Five .cbk and five .tpemb files, any order")->required();
  items->add_option("--catalog", catalog_dir, "Catalog directory; default: tracks of the content embeddings");
  items->add_option("--base", base, "Text vocabulary size");
  items->add_option("--out", out, "Output items.tok")->required();
  items->callback([] {
    std::vector<quant::Codebook> books;
    std::vector<catalog::EmbeddingMatrix> mats;
    for (const auto& path : inputs) {
      std::string head = read_file(path).substr(0, 6);
      if (head == "TPCBK1") {
        books.push_back(quant::load_codebook(path));
      } else if (head == "TPEMB1") {
        mats.push_back(catalog::load_embeddings(path));
      } else {
        throw InvalidArgument(path + ": neither a codebook nor an embedding file");
      }
    }
    books = by_modality<quant::Codebook>(books, [](const quant::Codebook& b) { return b.modality; });
    mats = by_modality<catalog::EmbeddingMatrix>(
        mats, [](const catalog::EmbeddingMatrix& m) { return m.modality(); });
    std::vector<std::string> ids;
    if (!catalog_dir.empty()) {
      auto c = catalog::load_catalog(catalog_dir);
      for (const auto& tr : c.tracks()) ids.push_back(tr.track_id);
    } else {
      ids = mats[1].ids();
    }
    tok::Vocabulary vocab(base, books[0].k);
    auto tokens = quant::tokenize_items(vocab, books, mats, ids);
    tok::save_item_tokens(vocab, tokens, out);
    std::cout << tokens.size() << " items, vocabulary size " << vocab.size() << "\n";
  });

  auto* convos = t->add_subcommand("convos", "Render conversations into a training corpus");
  static std::string items_path, convos_path, out2, mask = "all";
  static std::size_t context = 256;
  convos->add_option("--items", items_path, "items.tok")->required();
  convos->add_option("--convos", convos_path, "Conversations JSONL")->required();
  convos->add_option("--context", context, "Window length in tokens");
  convos->add_option("--loss-mask", mask, "all | response (music and assistant tokens only)")
      ->check(CLI::IsMember({"all", "response"}));
  convos->add_option("--out", out2, "Output corpus")->required();
  convos->callback([] {
    auto [vocab, items] = load_items(items_path);
    std::vector<seq::Example> corpus;
    std::size_t tokens = 0;
    for (const auto& conv : synth::load_conversations(convos_path)) {
      auto rendered = tok::render_conversation(conv, vocab, items);
      for (auto& w : tok::window_sequence(rendered, context)) {
        tokens += w.ids.size();
        corpus.push_back({w.ids, tok::loss_mask(w, mask == "all")});
      }
    }
    seq::save_corpus(vocab, corpus, out2);
    std::cout << corpus.size() << " windows, " << tokens << " tokens\n";
  });
}

seq::ModelConfig model_config_from(const Config& cfg, std::uint32_t vocab_size) {
  seq::ModelConfig mc;
  mc.vocab_size = vocab_size;
  mc.d_model = static_cast<std::uint32_t>(cfg.get_int("model.d_model", mc.d_model));
  mc.n_layers = static_cast<std::uint32_t>(cfg.get_int("model.n_layers", mc.n_layers));
  mc.n_heads = static_cast<std::uint32_t>(cfg.get_int("model.n_heads", mc.n_heads));
  mc.context_len = static_cast<std::uint32_t>(cfg.get_int("model.context_len", mc.context_len));
  mc.seed = static_cast<std::uint64_t>(cfg.get_int("model.seed", 0));
  mc.validate();
  return mc;
}

seq::TrainConfig train_config_from(const Config& cfg) {
  seq::TrainConfig tc;
  tc.learning_rate = cfg.get_double("train.learning_rate", tc.learning_rate);
  tc.batch_size = static_cast<std::uint32_t>(cfg.get_int("train.batch_size", tc.batch_size));
  tc.epochs = static_cast<std::uint32_t>(cfg.get_int("train.epochs", tc.epochs));
  tc.weight_decay = cfg.get_double("train.weight_decay", tc.weight_decay);
  tc.grad_clip = cfg.get_double("train.grad_clip", tc.grad_clip);
  tc.seed = static_cast<std::uint64_t>(cfg.get_int("train.seed", 0));
  if (!(tc.learning_rate > 0)) throw InvalidArgument("train.learning_rate must be > 0");
  if (tc.batch_size == 0) throw InvalidArgument("train.batch_size must be >= 1");
  return tc;
}

void add_model(CLI::App& app) {
  auto* model = app.add_subcommand("model", "Sequence model training and generation")->require_subcommand(1);

  auto* train = model->add_subcommand("train", "Train (or resume) on a corpus");
  static std::string data, config_path, out, resume;
  static bool hewitt = true;
  train->add_option("--data", data, "Corpus from 'tokenize convos'")->required();
  train->add_option("--config", config_path, "TOML with [model] and [train] sections");
  train->add_option("--out", out, "Checkpoint directory")->required();
  train->add_option("--resume", resume, "Checkpoint to continue from");
  train->add_flag("--hewitt,!--no-hewitt", hewitt,
                  "Draw new-token embeddings from the text embedding mean/covariance");
  train->callback([] {
    Config cfg = config_path.empty() ? Config() : Config::load(config_path);
    auto [vocab, corpus] = seq::load_corpus(data);
    auto tc = train_config_from(cfg);
    seq::Checkpoint ckpt;
    if (!resume.empty()) {
      ckpt = seq::load_checkpoint(resume);
      if (ckpt.state.params.config.vocab_size != vocab.size()) {
        throw InvalidArgument("checkpoint vocabulary does not match the corpus");
      }
    } else {
      auto mc = model_config_from(cfg, vocab.size());
      auto base = seq::init_params(mc, vocab.music_begin(), std::nullopt);
      std::optional<seq::EmbeddingStats> stats;
      if (hewitt) stats = seq::embedding_stats(base, 0, vocab.music_begin());
      ckpt.state = seq::make_train_state(seq::init_params(mc, vocab.music_begin(), stats));
      ckpt.vocab_base = vocab.base_size();
      ckpt.vocab_k = vocab.k();
    }
    fs::create_directories(out);
    const double initial = seq::corpus_loss(ckpt.state.params, corpus);
    std::cout << "initial loss " << initial << std::endl;
    auto report = seq::train(ckpt.state, corpus, tc, [](std::uint32_t epoch, double loss) {
      std::cout << "epoch " << epoch << " loss " << loss << std::endl;
    });
    seq::save_checkpoint(ckpt, fs::path(out) / "model.ckpt");
    json log = {{"initial_loss", initial}, {"epoch_loss", report.epoch_loss},
                {"epochs_done", ckpt.state.epochs_done}};
    write_file(fs::path(out) / "loss.json", log.dump(2) + "\n");
  });

  auto* gen = model->add_subcommand("generate", "Continue a prompt");
  static std::string ckpt_path, prompt_file;
  static std::uint64_t seed = 0;
  static std::size_t max_new = 64;
  static bool grammar = true;
  static SamplingFlags sampling;
  gen->add_option("--ckpt", ckpt_path, "Checkpoint file")->required();
  gen->add_option("--prompt-file", prompt_file, "Prompt in token surface form")->required();
  gen->add_option("--seed", seed, "Sampling seed");
  gen->add_option("--max-new", max_new, "Maximum new tokens");
  gen->add_flag("--grammar,!--no-grammar", grammar, "Force well-formed music blocks");
  sampling.add(gen);
  gen->callback([] {
    auto ckpt = seq::load_checkpoint(ckpt_path);
    auto vocab = ckpt.vocabulary();
    if (!vocab) throw LoadError("checkpoint carries no vocabulary header");
    auto prompt = tok::encode_surface(*vocab, read_file(prompt_file));
    seq::GenerateOptions opts;
    opts.sampling = sampling.config();
    opts.max_new = max_new;
    opts.seed = seed;
    opts.stop_tokens = {vocab->user()};
    seq::MusicGrammar g(*vocab);
    auto out = seq::generate(ckpt.state.params, prompt, opts, grammar ? &g : nullptr);
    std::cout << tok::decode_to_surface(*vocab, out) << "\n";
  });
}

void add_recsys(CLI::App& app) {
  auto* rs = app.add_subcommand("recsys", "Token index and queries")->require_subcommand(1);

  auto* build = rs->add_subcommand("build", "Build a token index");
  static std::string items_path, catalog_dir, out;
  build->add_option("--items", items_path, "items.tok")->required();
  build->add_option("--catalog", catalog_dir, "Catalog directory for popularity");
  build->add_option("--out", out, "Output index")->required();
  build->callback([] {
    auto [vocab, items] = load_items(items_path);
    std::unordered_map<std::string, double> pop;
    if (!catalog_dir.empty()) pop = popularity_map(catalog::load_catalog(catalog_dir));
    retrieval::TokenIndex index(vocab, std::move(items), std::move(pop));
    retrieval::save_index(index, out);
    std::cout << index.size() << " items indexed\n";
  });

  auto* query = rs->add_subcommand("query", "Rank items for a music token block");
  static std::string index_path, tokens, weights = "25,16,9,4,1";
  static std::size_t top = 100;
  query->add_option("--index", index_path, "Index file")->required();
  query->add_option("--tokens", tokens, "Five music tokens, e.g. <|playlist-3|>...")->required();
  query->add_option("--weights", weights, "Profile name or five comma-separated weights");
  query->add_option("--top", top, "Results to print");
  query->callback([] {
    auto index = retrieval::load_index(index_path);
    auto seq = tok::parse_item_surface(index.vocab(), tokens);
    auto ranked = index.recommend(seq, retrieval::parse_profile(weights), top);
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      std::cout << i + 1 << '\t' << ranked[i].track_id << '\t' << ranked[i].score << '\n';
    }
  });
}

void add_synth(CLI::App& app) {
  auto* sy = app.add_subcommand("synth", "Conversation synthesis")->require_subcommand(1);

  auto* rule = sy->add_subcommand("rule", "Template-based conversations, one per playlist");
  static std::string catalog_dir, out, split, subset = "train";
  static std::uint64_t seed = 0;
  static synth::RuleSynthParams params;
  rule->add_option("--catalog", catalog_dir, "Catalog directory")->required();
  rule->add_option("--out", out, "Output JSONL")->required();
  rule->add_option("--seed", seed, "Seed");
  rule->add_option("--split", split, "Split JSON to select playlists");
  rule->add_option("--subset", subset, "train | test")->check(CLI::IsMember({"train", "test"}));
  rule->add_option("--p-reject", params.p_reject, "Probability of a rejected recommendation");
  rule->add_option("--min-exchanges", params.max_exchanges,
                   "Exchanges per conversation: max(this, half the playlist)");
  rule->callback([] {
    auto c = catalog::load_catalog(catalog_dir);
    std::vector<synth::Conversation> convs;
    std::size_t skipped = 0;
    for (const auto& p : select_playlists(c, split, subset)) {
      if (p.track_ids.size() < 2) {
        ++skipped;
        continue;
      }
      convs.push_back(synth::synthesize_rule_based(p, c, mix_seed(seed, stable_hash(p.playlist_id)), params));
    }
    synth::save_conversations(convs, out);
    std::cout << convs.size() << " conversations (" << skipped << " short playlists skipped)\n";
  });

  auto* llm = sy->add_subcommand("llm", "Conversations from an external text endpoint");
  static std::string provider, catalog2, out2, split2, subset2 = "train";
  static std::size_t limit = 0, negatives = 10;
  static std::uint64_t seed2 = 0;
  llm->add_option("--provider-config", provider, "TOML with an [llm] section")->required();
  llm->add_option("--catalog", catalog2, "Catalog directory")->required();
  llm->add_option("--out", out2, "Output JSONL")->required();
  llm->add_option("--split", split2, "Split JSON to select playlists");
  llm->add_option("--subset", subset2, "train | test")->check(CLI::IsMember({"train", "test"}));
  llm->add_option("--limit", limit, "Stop after this many playlists (0 = all)");
  llm->add_option("--negatives", negatives, "Negative-set size");
  llm->add_option("--seed", seed2, "Negative sampling seed");
  llm->callback([] {
    auto spec = synth::LlmClientSpec::from_config(Config::load(provider));
    auto transport = synth::make_http_transport(spec);
    auto c = catalog::load_catalog(catalog2);
    std::vector<synth::Conversation> convs;
    std::size_t failed = 0, done = 0;
    for (const auto& p : select_playlists(c, split2, subset2)) {
      if (limit && done >= limit) break;
      ++done;
      try {
        convs.push_back(synth::synthesize_llm(p, c, spec, *transport,
                                              mix_seed(seed2, stable_hash(p.playlist_id)), negatives));
      } catch (const synth::SchemaError& e) {
        ++failed;
        std::cerr << p.playlist_id << ": " << e.what() << "\n";
      }
    }
    synth::save_conversations(convs, out2);
    std::cout << convs.size() << " conversations, " << failed << " rejected\n";
  });
}

void add_eval(CLI::App& app) {
  auto* ev = app.add_subcommand("eval", "Turn-wise evaluation")->require_subcommand(1);

  auto* run = ev->add_subcommand("run", "Evaluate a checkpoint on conversations");
  static std::string ckpt_path, index_path, convos, weights = "quadratic-c2f", out, mode = "single",
                                                    bm25_catalog;
  static std::size_t top = 100, threads = 1;
  static std::uint64_t seed = 0;
  static SamplingFlags sampling;
  run->add_option("--ckpt", ckpt_path, "Checkpoint file")->required();
  run->add_option("--index", index_path, "Index file")->required();
  run->add_option("--convos", convos, "Conversations JSONL")->required();
  run->add_option("--weights", weights, "Profile name or five weights");
  run->add_option("--top", top, "Ranking depth");
  run->add_option("--seed", seed, "Sampling seed");
  run->add_option("--threads", threads, "Worker threads");
  run->add_option("--mode", mode, "single | ablation | leave-one-out")
      ->check(CLI::IsMember({"single", "ablation", "leave-one-out"}));
  run->add_option("--bm25-catalog", bm25_catalog, "Also report a BM25 baseline over this catalog");
  run->add_option("--out", out, "Report JSON")->required();
  sampling.add(run);
  run->callback([] {
    auto ckpt = seq::load_checkpoint(ckpt_path);
    auto vocab = ckpt.vocabulary();
    if (!vocab) throw LoadError("checkpoint carries no vocabulary header");
    auto index = retrieval::load_index(index_path);
    auto convs = synth::load_conversations(convos);
    eval::ModelGenerator gen(ckpt.state.params, *vocab, index.items(), sampling.config(), seed,
                             fs::path(ckpt_path).filename().string() + "@epoch" +
                                 std::to_string(ckpt.state.epochs_done));
    eval::EvalOptions opts;
    opts.top_n = top;
    opts.threads = threads;
    opts.fingerprint = {{"seed", seed},
                        {"temperature", sampling.temperature},
                        {"top_p", sampling.top_p},
                        {"repetition_penalty", sampling.repetition_penalty},
                        {"checkpoint", ckpt_path}};
    json report;
    if (mode == "single") {
      auto r = eval::evaluate_turnwise(gen, index, retrieval::parse_profile(weights), convs, opts);
      report = eval::report_to_json(r);
      std::cout << "MRR " << r.mrr << "  Hit@1 " << r.hit1 << "  Hit@10 " << r.hit10
                << "  Hit@100 " << r.hit100 << "\n";
    } else if (mode == "ablation") {
      report["profiles"] = json::array();
      for (const auto& row : eval::run_weight_ablation(gen, index, convs, retrieval::standard_profiles(), opts)) {
        report["profiles"].push_back({{"name", row.name}, {"report", eval::report_to_json(row.report)}});
        std::cout << row.name << "\tMRR " << row.report.mrr << "\tHit@10 " << row.report.hit10 << "\n";
      }
    } else {
      auto t = eval::run_leave_one_out(gen, index, convs, opts);
      report["baseline"] = eval::report_to_json(t.baseline);
      report["rows"] = json::array();
      for (const auto& row : t.rows) {
        report["rows"].push_back({{"removed", modality_name(row.removed)},
                                  {"delta_mrr", row.delta_mrr},
                                  {"delta_hit@10", row.delta_hit10},
                                  {"report", eval::report_to_json(row.report)}});
        std::cout << "-" << modality_name(row.removed) << "\tdMRR " << row.delta_mrr
                  << "\tdHit@10 " << row.delta_hit10 << "\n";
      }
    }
    if (!bm25_catalog.empty()) {
      auto c = catalog::load_catalog(bm25_catalog);
      auto r = eval::evaluate_bm25(bm25::index_catalog(c), index, convs, opts);
      report["bm25"] = eval::report_to_json(r);
      std::cout << "BM25 MRR " << r.mrr << "  Hit@10 " << r.hit10 << "\n";
    }
    write_file(out, report.dump(2) + "\n");
  });

  auto* plot = ev->add_subcommand("plot", "Per-turn MRR chart");
  static std::vector<std::string> reports;
  static std::string svg;
  plot->add_option("--report", reports, "Report JSON (repeatable)")->required();
  plot->add_option("--out", svg, "Output SVG")->required();
  plot->callback([] {
    std::vector<std::pair<std::string, eval::EvalReport>> series;
    for (const auto& path : reports) {
      json j = json::parse(read_file(path));
      auto label = fs::path(path).stem().string();
      if (j.contains("profiles")) {
        for (const auto& p : j["profiles"]) {
          series.emplace_back(p["name"].get<std::string>(), eval::report_from_json(p["report"]));
        }
      } else if (j.contains("baseline")) {
        series.emplace_back(label, eval::report_from_json(j["baseline"]));
      } else {
        series.emplace_back(label, eval::report_from_json(j));
      }
      if (j.contains("bm25")) series.emplace_back("bm25", eval::report_from_json(j["bm25"]));
    }
    write_file(svg, eval::render_mrr_svg(series));
  });
}

void add_serve(CLI::App& app) {
  auto* serve = app.add_subcommand("serve", "Run the chat HTTP service");
  static std::string config_path;
  serve->add_option("--config", config_path, "Service TOML ([service] section)");
  serve->callback([] {
    Config cfg = service::load_service_config(config_path);
    auto need = [&](const std::string& key) {
      auto v = cfg.get_string(key, "");
      if (v.empty()) throw InvalidArgument(key + " is required");
      return v;
    };
    auto ckpt = seq::load_checkpoint(need("service.checkpoint"));
    auto vocab = ckpt.vocabulary();
    if (!vocab) throw LoadError("checkpoint carries no vocabulary header");
    auto index = retrieval::load_index(need("service.index"));
    auto cat = catalog::load_catalog(need("service.catalog"));
    service::ServiceOptions opts;
    opts.weights = retrieval::parse_profile(cfg.get_string("service.weights", "quadratic-c2f"));
    opts.top_n = static_cast<std::size_t>(cfg.get_int("service.top_n", 5));
    opts.seed = static_cast<std::uint64_t>(cfg.get_int("service.seed", 0));
    opts.sampling = sampling_from(cfg.get_double("service.temperature", 1.0),
                                  cfg.get_double("service.top_p", 0.9),
                                  cfg.get_double("service.repetition_penalty", 1.0));
    std::shared_ptr<service::SessionStore> store;
    auto store_path = cfg.get_string("service.session_store", "");
    if (store_path.empty()) {
      store = std::make_shared<service::MemorySessionStore>();
    } else {
      store = std::make_shared<service::FileSessionStore>(store_path);
    }
    service::ChatService svc(ckpt.state.params, *vocab, index, cat, store, opts);
    httplib::Server server;
    service::register_routes(server, svc);
    auto host = cfg.get_string("service.host", "127.0.0.1");
    auto port = static_cast<int>(cfg.get_int("service.port", 8080));
    std::cout << "listening on " << host << ":" << port << std::endl;
    if (!server.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
  });
}

void add_fixture(CLI::App& app) {
  auto* fx = app.add_subcommand("fixture", "Synthetic catalogs")->require_subcommand(1);
  auto* planted = fx->add_subcommand("planted", "Catalog with planted genre structure");
  static fixture::PlantedParams p;
  static std::string out;
  planted->add_option("--genres", p.genres);
  planted->add_option("--artists-per-genre", p.artists_per_genre);
  planted->add_option("--tracks-per-artist", p.tracks_per_artist);
  planted->add_option("--playlists", p.playlists);
  planted->add_option("--last-day-playlists", p.last_day_playlists);
  planted->add_option("--playlist-len", p.playlist_len);
  planted->add_option("--dim", p.dim);
  planted->add_option("--noise", p.noise);
  planted->add_option("--seed", p.seed);
  planted->add_option("--out", out, "Output directory")->required();
  planted->callback([] {
    auto pc = fixture::make_planted_catalog(p);
    fixture::write_planted_catalog(pc, out);
    std::cout << pc.manifest.dump() << "\n";
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"talkplay: conversational music recommendation by token generation"};
  app.require_subcommand(1);
  add_catalog(app);
  add_item2vec(app);
  add_quantize(app);
  add_tokenize(app);
  add_model(app);
  add_recsys(app);
  add_synth(app);
  add_eval(app);
  add_serve(app);
  add_fixture(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
