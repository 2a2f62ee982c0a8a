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

#include "talkplay/evalharness.hpp"

#include <algorithm>
#include <array>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>
#include <variant>

#include "talkplay/render.hpp"

namespace talkplay::eval {

using nlohmann::json;

double mrr(std::span<const Rank> ranks) {
  if (ranks.empty()) throw InvalidArgument("mrr: no ranks");
  double sum = 0;
  for (const auto& r : ranks) {
    if (!r) continue;
    if (*r == 0) throw InvalidArgument("mrr: ranks are 1-based");
    sum += 1.0 / static_cast<double>(*r);
  }
  return sum / static_cast<double>(ranks.size());
}

double hit_at_k(std::span<const Rank> ranks, std::size_t k) {
  if (ranks.empty()) throw InvalidArgument("hit_at_k: no ranks");
  if (k == 0) throw InvalidArgument("hit_at_k: k must be >= 1");
  std::size_t hits = 0;
  for (const auto& r : ranks) {
    if (r && *r <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

std::optional<tok::MusicTokenSeq> OracleGenerator::do_generate(const QueryContext& ctx) {
  auto it = items_.find(ctx.target);
  if (it == items_.end()) return std::nullopt;
  return it->second;
}

ModelGenerator::ModelGenerator(const seq::Params<float>& params, tok::Vocabulary vocab,
                               const tok::ItemTokens& items, seq::SamplingConfig sampling,
                               std::uint64_t seed, std::string checkpoint_id)
    : params_(params),
      vocab_(vocab),
      items_(items),
      sampling_(sampling),
      seed_(seed),
      checkpoint_id_(std::move(checkpoint_id)) {
  sampling_.validate();
  if (params.config.vocab_size != vocab.size()) {
    throw InvalidArgument("model vocabulary size does not match the token vocabulary");
  }
}

namespace {
// <start_of_music>, five music ids, <end_of_music>, plus one spare position.
constexpr std::size_t kBlockReserve = 8;
}  // namespace

std::optional<tok::MusicTokenSeq> ModelGenerator::do_generate(const QueryContext& ctx) {
  auto prompt = tok::render_prompt(ctx.history, ctx.query, vocab_, items_,
                                   params_.config.context_len, kBlockReserve);
  std::uint64_t seed = mix_seed(mix_seed(seed_, stable_hash(ctx.conversation_id)), ctx.turn);
  return generate_music_block(params_, vocab_, std::move(prompt.ids), sampling_, seed);
}

std::optional<tok::MusicTokenSeq> generate_music_block(const seq::Params<float>& params,
                                                       const tok::Vocabulary& vocab,
                                                       std::vector<tok::TokenId> prompt,
                                                       const seq::SamplingConfig& sampling,
                                                       std::uint64_t seed) {
  prompt.push_back(vocab.som());
  seq::MusicGrammar grammar(vocab);
  seq::GenerateOptions opts;
  opts.sampling = sampling;
  opts.max_new = kNumModalities + 1;
  opts.seed = seed;
  opts.stop_tokens = {vocab.eom()};
  auto out = seq::generate(params, prompt, opts, &grammar);
  if (out.size() < kNumModalities) return std::nullopt;
  tok::MusicTokenSeq block;
  std::copy_n(out.begin(), kNumModalities, block.ids.begin());
  if (!tok::is_valid_item(vocab, block)) return std::nullopt;
  return block;
}

namespace {

// Exchanges of a conversation if it can be evaluated, else a reason.
std::variant<std::vector<synth::Exchange>, std::string> usable_exchanges(
    const synth::Conversation& conv, const retrieval::TokenIndex& index) {
  std::vector<synth::Exchange> exs;
  try {
    exs = synth::exchanges(synth::normalize_turn_order(conv));
  } catch (const Error& e) {
    return std::string(e.what());
  }
  if (exs.empty()) return std::string("no exchanges");
  for (std::size_t i = 0; i < exs.size(); ++i) {
    const auto& ex = exs[i];
    if (!index.items().contains(ex.track_id)) {
      return "exchange " + std::to_string(i + 1) + ": track " + ex.track_id + " has no tokens";
    }
    if (ex.query.find_first_not_of(" \t\r\n") == std::string::npos ||
        ex.response.find_first_not_of(" \t\r\n") == std::string::npos) {
      return "exchange " + std::to_string(i + 1) + ": empty text";
    }
  }
  return exs;
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = next++; i < n; i = next++) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

json base_fingerprint(const EvalOptions& options) {
  json fp = {{"top_n", options.top_n}, {"exclusion", "previous-ground-truth"},
             {"history", "ground-truth"}};
  for (auto& [k, v] : options.fingerprint.items()) fp[k] = v;
  return fp;
}

std::optional<std::size_t> position_of(const retrieval::RankedList& list,
                                       const std::string& id) {
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (list[i].track_id == id) return i + 1;
  }
  return std::nullopt;
}

}  // namespace

QuerySet gather_queries(MusicGenerator& generator, const retrieval::TokenIndex& index,
                        std::span<const synth::Conversation> conversations,
                        const EvalOptions& options) {
  std::vector<std::vector<QueryRecord>> per_conv(conversations.size());
  std::vector<std::string> problems(conversations.size());
  parallel_for(conversations.size(), options.threads, [&](std::size_t c) {
    const auto& conv = conversations[c];
    auto usable = usable_exchanges(conv, index);
    if (auto* reason = std::get_if<std::string>(&usable)) {
      problems[c] = "skipped conversation " + conv.conversation_id + ": " + *reason;
      return;
    }
    const auto& exs = std::get<std::vector<synth::Exchange>>(usable);
    std::vector<std::string> seen;
    for (std::size_t t = 0; t < exs.size(); ++t) {
      QueryContext ctx{conv.conversation_id, t + 1,
                       std::span<const synth::Exchange>(exs.data(), t), exs[t].query,
                       exs[t].track_id};
      QueryRecord rec{conv.conversation_id, t + 1, exs[t].query, exs[t].track_id,
                      generator.generate(ctx), seen};
      per_conv[c].push_back(std::move(rec));
      seen.push_back(exs[t].track_id);
    }
  });
  QuerySet out;
  for (std::size_t c = 0; c < conversations.size(); ++c) {
    if (!problems[c].empty()) {
      ++out.skipped_conversations;
      out.warnings.push_back(problems[c]);
    }
    for (auto& r : per_conv[c]) out.records.push_back(std::move(r));
  }
  return out;
}

std::vector<Rank> EvalReport::ranks() const {
  std::vector<Rank> out;
  for (const auto& q : queries) out.push_back(q.rank);
  return out;
}

EvalReport aggregate(std::vector<QueryLog> logs, std::size_t skipped, json fingerprint) {
  if (logs.empty()) throw InvalidArgument("evaluation produced no queries");
  EvalReport r;
  r.queries = std::move(logs);
  r.skipped_conversations = skipped;
  r.fingerprint = std::move(fingerprint);
  auto ranks = r.ranks();
  r.mrr = mrr(ranks);
  r.hit1 = hit_at_k(ranks, 1);
  r.hit10 = hit_at_k(ranks, 10);
  r.hit100 = hit_at_k(ranks, 100);
  std::size_t turns = 0;
  for (const auto& q : r.queries) turns = std::max(turns, q.turn);
  std::vector<double> sum(turns, 0.0);
  r.per_turn_n.assign(turns, 0);
  for (const auto& q : r.queries) {
    ++r.per_turn_n[q.turn - 1];
    if (q.rank) sum[q.turn - 1] += 1.0 / static_cast<double>(*q.rank);
  }
  r.per_turn_mrr.resize(turns);
  for (std::size_t t = 0; t < turns; ++t) {
    r.per_turn_mrr[t] = r.per_turn_n[t] ? sum[t] / static_cast<double>(r.per_turn_n[t]) : 0.0;
  }
  return r;
}

EvalReport score_queries(const QuerySet& queries, const retrieval::TokenIndex& index,
                         const retrieval::WeightProfile& weights, const EvalOptions& options) {
  weights.validate();
  std::vector<QueryLog> logs;
  for (const auto& rec : queries.records) {
    QueryLog log{rec.conversation_id, rec.turn, rec.target, std::nullopt, {}, 0};
    if (rec.generated) {
      std::set<std::string> exclude(rec.exclude.begin(), rec.exclude.end());
      auto ranked = index.recommend(*rec.generated, weights, options.top_n, exclude);
      log.rank = position_of(ranked, rec.target);
      log.generated = tok::item_surface(index.vocab(), *rec.generated);
      log.matched = retrieval::match_mask(index.vocab(), *rec.generated,
                                          index.items().at(rec.target));
    }
    logs.push_back(std::move(log));
  }
  json fp = base_fingerprint(options);
  fp["weights"] = retrieval::profile_to_string(weights);
  return aggregate(std::move(logs), queries.skipped_conversations, std::move(fp));
}

EvalReport evaluate_turnwise(MusicGenerator& generator, const retrieval::TokenIndex& index,
                             const retrieval::WeightProfile& weights,
                             std::span<const synth::Conversation> conversations,
                             const EvalOptions& options) {
  weights.validate();
  EvalOptions opts = options;
  opts.fingerprint["model"] = generator.id();
  return score_queries(gather_queries(generator, index, conversations, opts), index, weights,
                       opts);
}

std::vector<AblationRow> run_weight_ablation(MusicGenerator& generator,
                                             const retrieval::TokenIndex& index,
                                             std::span<const synth::Conversation> conversations,
                                             const std::vector<retrieval::NamedProfile>& profiles,
                                             const EvalOptions& options) {
  for (const auto& p : profiles) p.weights.validate();
  EvalOptions opts = options;
  opts.fingerprint["model"] = generator.id();
  QuerySet queries = gather_queries(generator, index, conversations, opts);
  std::vector<AblationRow> rows;
  for (const auto& p : profiles) {
    rows.push_back({p.name, p.weights, score_queries(queries, index, p.weights, opts)});
  }
  return rows;
}

LeaveOneOutTable run_leave_one_out(MusicGenerator& generator, const retrieval::TokenIndex& index,
                                   std::span<const synth::Conversation> conversations,
                                   const EvalOptions& options) {
  EvalOptions opts = options;
  opts.fingerprint["model"] = generator.id();
  QuerySet queries = gather_queries(generator, index, conversations, opts);
  const retrieval::WeightProfile uniform{{1, 1, 1, 1, 1}};
  LeaveOneOutTable table;
  table.baseline = score_queries(queries, index, uniform, opts);
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    retrieval::WeightProfile w = uniform;
    w.lambda[m] = 0;
    EvalReport r = score_queries(queries, index, w, opts);
    double dm = r.mrr - table.baseline.mrr;
    double dh = r.hit10 - table.baseline.hit10;
    table.rows.push_back({kModalityOrder[m], std::move(r), dm, dh});
  }
  return table;
}

EvalReport evaluate_bm25(const bm25::Bm25Index& bm25, const retrieval::TokenIndex& index,
                         std::span<const synth::Conversation> conversations,
                         const EvalOptions& options, bool with_history) {
  std::vector<QueryLog> logs;
  std::size_t skipped = 0;
  for (const auto& conv : conversations) {
    auto usable = usable_exchanges(conv, index);
    if (std::holds_alternative<std::string>(usable)) {
      ++skipped;
      continue;
    }
    const auto& exs = std::get<std::vector<synth::Exchange>>(usable);
    std::set<std::string> seen;
    std::string history;
    for (std::size_t t = 0; t < exs.size(); ++t) {
      std::string query = with_history ? history + exs[t].query : exs[t].query;
      auto ranked = bm25.rank(query, options.top_n, seen);
      history += exs[t].query + " " + exs[t].response + " ";
      logs.push_back({conv.conversation_id, t + 1, exs[t].track_id,
                      position_of(ranked, exs[t].track_id), {}, 0});
      seen.insert(exs[t].track_id);
    }
  }
  json fp = base_fingerprint(options);
  fp["model"] = "bm25";
  fp["bm25_query"] = with_history ? "history+query" : "query";
  return aggregate(std::move(logs), skipped, std::move(fp));
}

json report_to_json(const EvalReport& r) {
  json queries = json::array();
  for (const auto& q : r.queries) {
    queries.push_back({{"conversation_id", q.conversation_id},
                       {"turn", q.turn},
                       {"target", q.target},
                       {"rank", q.rank ? json(*q.rank) : json(nullptr)},
                       {"generated", q.generated},
                       {"matched", q.matched}});
  }
  return {{"mrr", r.mrr},
          {"hit@1", r.hit1},
          {"hit@10", r.hit10},
          {"hit@100", r.hit100},
          {"per_turn_mrr", r.per_turn_mrr},
          {"per_turn_n", r.per_turn_n},
          {"skipped_conversations", r.skipped_conversations},
          {"fingerprint", r.fingerprint},
          {"queries", queries}};
}

EvalReport report_from_json(const json& j) {
  try {
    EvalReport r;
    r.mrr = j.at("mrr").get<double>();
    r.hit1 = j.at("hit@1").get<double>();
    r.hit10 = j.at("hit@10").get<double>();
    r.hit100 = j.at("hit@100").get<double>();
    r.per_turn_mrr = j.at("per_turn_mrr").get<std::vector<double>>();
    r.per_turn_n = j.at("per_turn_n").get<std::vector<std::size_t>>();
    r.skipped_conversations = j.at("skipped_conversations").get<std::size_t>();
    r.fingerprint = j.at("fingerprint");
    for (const auto& q : j.at("queries")) {
      QueryLog log;
      log.conversation_id = q.at("conversation_id").get<std::string>();
      log.turn = q.at("turn").get<std::size_t>();
      log.target = q.at("target").get<std::string>();
      if (!q.at("rank").is_null()) log.rank = q.at("rank").get<std::size_t>();
      log.generated = q.at("generated").get<std::string>();
      log.matched = q.at("matched").get<std::uint8_t>();
      r.queries.push_back(std::move(log));
    }
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("report: ") + e.what());
  }
}

std::string render_mrr_svg(const std::vector<std::pair<std::string, EvalReport>>& series) {
  constexpr double kW = 640, kH = 400, kLeft = 60, kRight = 160, kTop = 30, kBottom = 50;
  static const std::array<const char*, 6> kColors = {"#1f77b4", "#d62728", "#2ca02c",
                                                     "#ff7f0e", "#9467bd", "#8c564b"};
  std::size_t turns = 1;
  double ymax = 0.0;
  for (const auto& [name, r] : series) {
    turns = std::max(turns, r.per_turn_mrr.size());
    for (double v : r.per_turn_mrr) ymax = std::max(ymax, v);
  }
  ymax = ymax > 0 ? std::min(1.0, ymax * 1.1) : 1.0;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto x = [&](std::size_t t) {
    return kLeft + (turns == 1 ? pw / 2 : pw * static_cast<double>(t) / (turns - 1));
  };
  auto y = [&](double v) { return kTop + ph * (1.0 - v / ymax); };

  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw
     << "\" y2=\"" << kTop + ph << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
     << kTop + ph << "\" stroke=\"black\"/>\n";
  for (std::size_t t = 0; t < turns; ++t) {
    os << "<text x=\"" << x(t) << "\" y=\"" << kTop + ph + 18 << "\" text-anchor=\"middle\">"
       << t + 1 << "</text>\n";
  }
  for (int i = 0; i <= 4; ++i) {
    double v = ymax * i / 4;
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << y(v) + 4 << "\" text-anchor=\"end\">"
       << std::setprecision(3) << v << std::setprecision(2) << "</text>\n";
  }
  os << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kH - 10
     << "\" text-anchor=\"middle\">turn</text>\n";
  os << "<text x=\"15\" y=\"" << kTop + ph / 2 << "\" transform=\"rotate(-90 15 "
     << kTop + ph / 2 << ")\" text-anchor=\"middle\">MRR</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& [name, r] = series[s];
    const char* color = kColors[s % kColors.size()];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t t = 0; t < r.per_turn_mrr.size(); ++t) {
      os << (t ? " " : "") << x(t) << "," << y(r.per_turn_mrr[t]);
    }
    os << "\"/>\n";
    double ly = kTop + 16.0 * static_cast<double>(s);
    os << "<rect x=\"" << kLeft + pw + 15 << "\" y=\"" << ly << "\" width=\"12\" height=\"4\" fill=\""
       << color << "\"/>\n";
    std::string label;
    for (char c : name) {
      if (c == '<') label += "&lt;";
      else if (c == '&') label += "&amp;";
      else label += c;
    }
    os << "<text x=\"" << kLeft + pw + 32 << "\" y=\"" << ly + 6 << "\">" << label << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace talkplay::eval
