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

#include <atomic>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "talkplay/bm25.hpp"
#include "talkplay/conversation.hpp"
#include "talkplay/retrieval.hpp"
#include "talkplay/seqmodel.hpp"

// Turn-wise recommendation evaluation with teacher-forced history.
namespace talkplay::eval {

// 1-based rank of the relevant item; nullopt is a miss.
using Rank = std::optional<std::size_t>;

// Mean reciprocal rank; misses count 0. Throws InvalidArgument when empty or
// when a rank is 0.
double mrr(std::span<const Rank> ranks);
// Fraction of ranks <= k. Throws InvalidArgument when empty or k == 0.
double hit_at_k(std::span<const Rank> ranks, std::size_t k);

// Everything a generator may look at for one evaluated exchange.
struct QueryContext {
  std::string conversation_id;
  std::size_t turn = 0;  // 1-based exchange number
  std::span<const synth::Exchange> history;
  std::string query;
  std::string target;  // ground truth, visible only to oracles
};

class MusicGenerator {
 public:
  virtual ~MusicGenerator() = default;
  // One music block for the query, or nullopt if none was produced.
  std::optional<tok::MusicTokenSeq> generate(const QueryContext& ctx) {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return do_generate(ctx);
  }
  std::size_t calls() const { return calls_.load(); }
  // Identifies the model in report fingerprints.
  virtual std::string id() const = 0;

 protected:
  virtual std::optional<tok::MusicTokenSeq> do_generate(const QueryContext& ctx) = 0;

 private:
  std::atomic<std::size_t> calls_{0};
};

// Emits the target's exact tokens.
class OracleGenerator : public MusicGenerator {
 public:
  explicit OracleGenerator(const tok::ItemTokens& items) : items_(items) {}
  std::string id() const override { return "oracle"; }

 protected:
  std::optional<tok::MusicTokenSeq> do_generate(const QueryContext& ctx) override;

 private:
  const tok::ItemTokens& items_;
};

// Emits the same block for every query.
class ConstantGenerator : public MusicGenerator {
 public:
  explicit ConstantGenerator(tok::MusicTokenSeq seq) : seq_(seq) {}
  std::string id() const override { return "constant"; }

 protected:
  std::optional<tok::MusicTokenSeq> do_generate(const QueryContext&) override { return seq_; }

 private:
  tok::MusicTokenSeq seq_;
};

// Prompt = history + query + <start_of_music>; five grammar-constrained
// tokens are sampled, then <end_of_music> is forced. Each query samples
// with a seed derived from (seed, conversation id, turn).
class ModelGenerator : public MusicGenerator {
 public:
  ModelGenerator(const seq::Params<float>& params, tok::Vocabulary vocab,
                 const tok::ItemTokens& items, seq::SamplingConfig sampling, std::uint64_t seed,
                 std::string checkpoint_id = "model");
  std::string id() const override { return checkpoint_id_; }

 protected:
  std::optional<tok::MusicTokenSeq> do_generate(const QueryContext& ctx) override;

 private:
  const seq::Params<float>& params_;
  tok::Vocabulary vocab_;
  const tok::ItemTokens& items_;
  seq::SamplingConfig sampling_;
  std::uint64_t seed_;
  std::string checkpoint_id_;
};

// Appends <start_of_music> to `prompt` and samples one block. Returns
// nullopt if the generated ids do not form a valid item.
std::optional<tok::MusicTokenSeq> generate_music_block(const seq::Params<float>& params,
                                                       const tok::Vocabulary& vocab,
                                                       std::vector<tok::TokenId> prompt,
                                                       const seq::SamplingConfig& sampling,
                                                       std::uint64_t seed);

// One evaluated exchange with its generation, independent of weights.
struct QueryRecord {
  std::string conversation_id;
  std::size_t turn = 0;
  std::string query;
  std::string target;
  std::optional<tok::MusicTokenSeq> generated;
  std::vector<std::string> exclude;  // ground-truth tracks of earlier exchanges
};

struct QuerySet {
  std::vector<QueryRecord> records;
  std::size_t skipped_conversations = 0;
  std::vector<std::string> warnings;
};

struct EvalOptions {
  std::size_t top_n = 100;
  std::size_t threads = 1;
  nlohmann::json fingerprint = nlohmann::json::object();  // merged into the report
};

// A conversation is skipped (with a warning) when its turns are not in
// canonical order, a text is empty or a track has no tokens in the index.
// Conversations run in parallel when options.threads > 1; the result does
// not depend on the schedule.
QuerySet gather_queries(MusicGenerator& generator, const retrieval::TokenIndex& index,
                        std::span<const synth::Conversation> conversations,
                        const EvalOptions& options = {});

struct QueryLog {
  std::string conversation_id;
  std::size_t turn = 0;
  std::string target;
  Rank rank;
  std::string generated;  // surface form, empty if nothing was generated
  std::uint8_t matched = 0;  // target's overlap with the generated block
};

struct EvalReport {
  double mrr = 0;
  double hit1 = 0, hit10 = 0, hit100 = 0;
  std::vector<double> per_turn_mrr;     // index 0 = first exchange
  std::vector<std::size_t> per_turn_n;  // queries per turn
  std::vector<QueryLog> queries;
  std::size_t skipped_conversations = 0;
  nlohmann::json fingerprint = nlohmann::json::object();

  std::vector<Rank> ranks() const;
};

// Aggregates per-query ranks into a report. Throws InvalidArgument if `logs`
// is empty.
EvalReport aggregate(std::vector<QueryLog> logs, std::size_t skipped, nlohmann::json fingerprint);

// Scores existing generations under one weight profile.
EvalReport score_queries(const QuerySet& queries, const retrieval::TokenIndex& index,
                         const retrieval::WeightProfile& weights, const EvalOptions& options = {});

EvalReport evaluate_turnwise(MusicGenerator& generator, const retrieval::TokenIndex& index,
                             const retrieval::WeightProfile& weights,
                             std::span<const synth::Conversation> conversations,
                             const EvalOptions& options = {});

struct AblationRow {
  std::string name;
  retrieval::WeightProfile weights;
  EvalReport report;
};

// One row per profile (default: the five standard profiles, in order);
// generations are gathered once and reused.
std::vector<AblationRow> run_weight_ablation(
    MusicGenerator& generator, const retrieval::TokenIndex& index,
    std::span<const synth::Conversation> conversations,
    const std::vector<retrieval::NamedProfile>& profiles = retrieval::standard_profiles(),
    const EvalOptions& options = {});

struct LeaveOneOutRow {
  Modality removed;
  EvalReport report;
  double delta_mrr = 0;  // row - baseline
  double delta_hit10 = 0;
};

struct LeaveOneOutTable {
  EvalReport baseline;  // uniform weights
  std::vector<LeaveOneOutRow> rows;  // modality order
};

LeaveOneOutTable run_leave_one_out(MusicGenerator& generator, const retrieval::TokenIndex& index,
                                   std::span<const synth::Conversation> conversations,
                                   const EvalOptions& options = {});

// BM25 over track documents with the same exclusion and skipping rules. The
// search string is the current query, preceded by the texts of all earlier
// user and assistant turns when `with_history` is set.
EvalReport evaluate_bm25(const bm25::Bm25Index& bm25, const retrieval::TokenIndex& index,
                         std::span<const synth::Conversation> conversations,
                         const EvalOptions& options = {}, bool with_history = true);

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

// Line chart of per-turn MRR for one or more labelled reports.
std::string render_mrr_svg(const std::vector<std::pair<std::string, EvalReport>>& series);

}  // namespace talkplay::eval
