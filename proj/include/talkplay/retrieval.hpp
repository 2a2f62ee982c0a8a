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

#include <array>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "talkplay/tokenizer.hpp"

namespace talkplay::retrieval {

// One non-negative weight per modality in kModalityOrder.
struct WeightProfile {
  std::array<double, kNumModalities> lambda{};

  // Throws InvalidArgument for negative or non-finite weights, or all zeros.
  void validate() const;
  double total() const;

  friend bool operator==(const WeightProfile&, const WeightProfile&) = default;
};

// (25, 16, 9, 4, 1): coarse-to-fine quadratic decay, the default profile.
WeightProfile quadratic_coarse_to_fine();

struct NamedProfile {
  std::string name;
  WeightProfile weights;
};

// uniform, linear-f2c, quadratic-f2c, linear-c2f, quadratic-c2f.
const std::vector<NamedProfile>& standard_profiles();

// A standard profile name or a comma-separated list of five numbers.
WeightProfile parse_profile(std::string_view text);
std::string profile_to_string(const WeightProfile& w);

struct ScoredTrack {
  std::string track_id;
  double score = 0.0;
  // Bit m set when modality m matched the query.
  std::uint8_t matched = 0;
};

using RankedList = std::vector<ScoredTrack>;

// s = sum_m lambda_m [query_m == item_m]; the playlist-unk token never matches.
double score_partial(const tok::Vocabulary& vocab, const tok::MusicTokenSeq& query,
                     const tok::MusicTokenSeq& item, const WeightProfile& weights);
std::uint8_t match_mask(const tok::Vocabulary& vocab, const tok::MusicTokenSeq& query,
                        const tok::MusicTokenSeq& item);
double score_mask(std::uint8_t mask, const WeightProfile& weights);

// Reverse lookup structures over a fixed set of items.
class TokenIndex {
 public:
  TokenIndex() = default;
  // Throws InvalidArgument when a sequence is structurally invalid.
  TokenIndex(tok::Vocabulary vocab, tok::ItemTokens items,
             std::unordered_map<std::string, double> popularity = {});

  const tok::Vocabulary& vocab() const { return *vocab_; }
  const tok::ItemTokens& items() const { return items_; }
  std::size_t size() const { return items_.size(); }

  // Items holding `token` in slot m (sorted ids).
  const std::vector<std::string>& postings(Modality m, tok::TokenId token) const;
  // Items whose full five-token tuple equals `seq`.
  const std::vector<std::string>& exact(const tok::MusicTokenSeq& seq) const;
  double popularity(const std::string& track_id) const;

  // Exact-match items first, then partial matches from the union of postings;
  // ties by descending popularity, then ascending track id.
  RankedList recommend(const tok::MusicTokenSeq& query, const WeightProfile& weights,
                       std::size_t top_n, const std::set<std::string>& exclude = {}) const;

 private:
  std::optional<tok::Vocabulary> vocab_;
  tok::ItemTokens items_;
  std::array<std::map<tok::TokenId, std::vector<std::string>>, kNumModalities> postings_;
  std::map<tok::MusicTokenSeq, std::vector<std::string>> exact_;
  std::unordered_map<std::string, double> popularity_;
};

// Orders by score desc, popularity desc, track id asc.
void sort_ranked(RankedList& list, const std::unordered_map<std::string, double>& popularity);

// Full-catalog scan used as a reference for recommend().
RankedList brute_force_rank(const TokenIndex& index, const tok::MusicTokenSeq& query,
                            const WeightProfile& weights, std::size_t top_n,
                            const std::set<std::string>& exclude = {});

// "TPIDX1", u32 base, u32 k, u32 count, then per item: str16 id, f64
// popularity, 5 x u32 token ids.
void save_index(const TokenIndex& index, const std::filesystem::path& path);
TokenIndex load_index(const std::filesystem::path& path);

}  // namespace talkplay::retrieval
