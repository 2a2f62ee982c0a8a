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

#include "talkplay/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "talkplay/binary_io.hpp"

namespace talkplay::retrieval {

void WeightProfile::validate() const {
  bool any = false;
  for (double l : lambda) {
    if (!std::isfinite(l) || l < 0) throw InvalidArgument("weights must be finite and >= 0");
    any = any || l > 0;
  }
  if (!any) throw InvalidArgument("at least one weight must be positive");
}

double WeightProfile::total() const {
  double s = 0;
  for (double l : lambda) s += l;
  return s;
}

WeightProfile quadratic_coarse_to_fine() { return {{25, 16, 9, 4, 1}}; }

const std::vector<NamedProfile>& standard_profiles() {
  static const std::vector<NamedProfile> profiles = {
      {"uniform", {{1, 1, 1, 1, 1}}},
      {"linear-f2c", {{1, 2, 3, 4, 5}}},
      {"quadratic-f2c", {{1, 4, 9, 16, 25}}},
      {"linear-c2f", {{5, 4, 3, 2, 1}}},
      {"quadratic-c2f", {{25, 16, 9, 4, 1}}},
  };
  return profiles;
}

WeightProfile parse_profile(std::string_view text) {
  for (const auto& p : standard_profiles()) {
    if (p.name == text) return p.weights;
  }
  WeightProfile w;
  std::stringstream ss{std::string(text)};
  std::string item;
  std::size_t i = 0;
  while (std::getline(ss, item, ',')) {
    if (i >= kNumModalities) throw ParseError("weights: more than five values");
    try {
      std::size_t used = 0;
      w.lambda[i] = std::stod(item, &used);
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw ParseError("junk");
    } catch (const std::exception&) {
      throw ParseError("weights: cannot parse '" + item + "'");
    }
    ++i;
  }
  if (i != kNumModalities) {
    throw ParseError("weights: expected a profile name or five comma-separated numbers");
  }
  w.validate();
  return w;
}

std::string profile_to_string(const WeightProfile& w) {
  std::ostringstream os;
  for (std::size_t i = 0; i < kNumModalities; ++i) {
    if (i) os << ',';
    os << w.lambda[i];
  }
  return os.str();
}

std::uint8_t match_mask(const tok::Vocabulary& vocab, const tok::MusicTokenSeq& query,
                        const tok::MusicTokenSeq& item) {
  std::uint8_t mask = 0;
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    if (query[m] == vocab.playlist_unk() || item[m] == vocab.playlist_unk()) continue;
    if (query[m] == item[m]) mask |= static_cast<std::uint8_t>(1u << m);
  }
  return mask;
}

double score_mask(std::uint8_t mask, const WeightProfile& weights) {
  double s = 0;
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    if (mask & (1u << m)) s += weights.lambda[m];
  }
  return s;
}

double score_partial(const tok::Vocabulary& vocab, const tok::MusicTokenSeq& query,
                     const tok::MusicTokenSeq& item, const WeightProfile& weights) {
  return score_mask(match_mask(vocab, query, item), weights);
}

TokenIndex::TokenIndex(tok::Vocabulary vocab, tok::ItemTokens items,
                       std::unordered_map<std::string, double> popularity)
    : vocab_(vocab), items_(std::move(items)), popularity_(std::move(popularity)) {
  for (const auto& [id, seq] : items_) {
    if (!tok::is_valid_item(vocab, seq)) {
      throw InvalidArgument("index: item " + id + " has structurally invalid tokens");
    }
    for (std::size_t m = 0; m < kNumModalities; ++m) {
      if (seq[m] == vocab.playlist_unk()) continue;
      postings_[m][seq[m]].push_back(id);
    }
    exact_[seq].push_back(id);
  }
}

const std::vector<std::string>& TokenIndex::postings(Modality m, tok::TokenId token) const {
  static const std::vector<std::string> kEmpty;
  const auto& map = postings_[modality_index(m)];
  auto it = map.find(token);
  return it == map.end() ? kEmpty : it->second;
}

const std::vector<std::string>& TokenIndex::exact(const tok::MusicTokenSeq& seq) const {
  static const std::vector<std::string> kEmpty;
  auto it = exact_.find(seq);
  return it == exact_.end() ? kEmpty : it->second;
}

double TokenIndex::popularity(const std::string& track_id) const {
  auto it = popularity_.find(track_id);
  return it == popularity_.end() ? 0.0 : it->second;
}

void sort_ranked(RankedList& list, const std::unordered_map<std::string, double>& popularity) {
  auto pop = [&](const std::string& id) {
    auto it = popularity.find(id);
    return it == popularity.end() ? 0.0 : it->second;
  };
  constexpr std::uint8_t kAll = (1u << kNumModalities) - 1;
  std::sort(list.begin(), list.end(), [&](const ScoredTrack& a, const ScoredTrack& b) {
    if (a.score != b.score) return a.score > b.score;
    bool ea = a.matched == kAll, eb = b.matched == kAll;
    if (ea != eb) return ea;
    double pa = pop(a.track_id), pb = pop(b.track_id);
    if (pa != pb) return pa > pb;
    return a.track_id < b.track_id;
  });
}

RankedList TokenIndex::recommend(const tok::MusicTokenSeq& query, const WeightProfile& weights,
                                 std::size_t top_n, const std::set<std::string>& exclude) const {
  RankedList out;
  if (items_.empty() || top_n == 0) return out;
  std::set<std::string> candidates;
  // Exact tuple matches are always candidates; unk never matches anything.
  if (query[0] != vocab_->playlist_unk()) {
    for (const auto& id : exact(query)) candidates.insert(id);
  }
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    if (weights.lambda[m] <= 0 || query[m] == vocab_->playlist_unk()) continue;
    for (const auto& id : postings(kModalityOrder[m], query[m])) candidates.insert(id);
  }
  for (const auto& id : candidates) {
    if (exclude.contains(id)) continue;
    std::uint8_t mask = match_mask(*vocab_, query, items_.find(id)->second);
    double s = score_mask(mask, weights);
    if (s > 0) out.push_back({id, s, mask});
  }
  sort_ranked(out, popularity_);
  if (out.size() > top_n) out.resize(top_n);
  return out;
}

RankedList brute_force_rank(const TokenIndex& index, const tok::MusicTokenSeq& query,
                            const WeightProfile& weights, std::size_t top_n,
                            const std::set<std::string>& exclude) {
  RankedList all;
  std::unordered_map<std::string, double> pop;
  for (const auto& [id, seq] : index.items()) {
    pop[id] = index.popularity(id);
    if (exclude.contains(id)) continue;
    // Score each modality independently of the index structures.
    double s = 0;
    std::uint8_t mask = 0;
    for (std::size_t m = 0; m < kNumModalities; ++m) {
      bool unk = query[m] == index.vocab().playlist_unk() || seq[m] == index.vocab().playlist_unk();
      if (!unk && query[m] == seq[m]) {
        s += weights.lambda[m];
        mask |= static_cast<std::uint8_t>(1u << m);
      }
    }
    if (s > 0) all.push_back({id, s, mask});
  }
  sort_ranked(all, pop);
  if (all.size() > top_n) all.resize(top_n);
  return all;
}

namespace {
constexpr std::string_view kIndexMagic = "TPIDX1";
}

void save_index(const TokenIndex& index, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  binio::Writer w(out);
  w.magic(kIndexMagic);
  w.put<std::uint32_t>(index.vocab().base_size());
  w.put<std::uint32_t>(index.vocab().k());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(index.size()));
  for (const auto& [id, seq] : index.items()) {
    w.str16(id);
    w.put<double>(index.popularity(id));
    for (tok::TokenId t : seq.ids) w.put<std::uint32_t>(t);
  }
  w.check();
}

TokenIndex load_index(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  binio::Reader r(in, path.string());
  r.expect_magic(kIndexMagic);
  auto base = r.get<std::uint32_t>();
  auto k = r.get<std::uint32_t>();
  auto count = r.get<std::uint32_t>();
  tok::Vocabulary vocab(base, k);
  tok::ItemTokens items;
  std::unordered_map<std::string, double> pop;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string id = r.str16();
    pop[id] = r.get<double>();
    tok::MusicTokenSeq seq;
    for (auto& t : seq.ids) t = r.get<std::uint32_t>();
    if (!items.emplace(id, seq).second) throw LoadError(path.string() + ": duplicate item " + id);
  }
  if (!r.at_end()) throw LoadError(path.string() + ": trailing bytes");
  return TokenIndex(vocab, std::move(items), std::move(pop));
}

}  // namespace talkplay::retrieval
