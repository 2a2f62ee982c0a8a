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

#include "talkplay/bm25.hpp"

#include <cctype>
#include <cmath>

namespace talkplay::bm25 {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Bm25Index::Bm25Index(std::vector<std::pair<std::string, std::string>> docs, Bm25Params params)
    : params_(params) {
  if (docs.empty()) throw InvalidArgument("bm25: empty corpus");
  double total = 0;
  for (auto& [id, text] : docs) {
    auto terms = tokenize(text);
    std::unordered_map<std::string, std::uint32_t> tf;
    for (auto& t : terms) ++tf[t];
    for (const auto& [t, n] : tf) ++df_[t];
    ids_.push_back(std::move(id));
    length_.push_back(static_cast<double>(terms.size()));
    total += static_cast<double>(terms.size());
    tf_.push_back(std::move(tf));
  }
  avg_length_ = total / static_cast<double>(ids_.size());
}

double Bm25Index::idf(std::string_view term) const {
  auto it = df_.find(std::string(term));
  double df = it == df_.end() ? 0.0 : it->second;
  double n = static_cast<double>(ids_.size());
  return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

std::vector<double> Bm25Index::scores(std::string_view query) const {
  std::vector<double> out(ids_.size(), 0.0);
  const double k1 = params_.k1, b = params_.b;
  for (const auto& term : tokenize(query)) {
    if (!df_.contains(term)) continue;
    double w = idf(term);
    for (std::size_t d = 0; d < ids_.size(); ++d) {
      auto it = tf_[d].find(term);
      if (it == tf_[d].end()) continue;
      double f = it->second;
      double norm = avg_length_ > 0 ? length_[d] / avg_length_ : 0.0;
      out[d] += w * f * (k1 + 1) / (f + k1 * (1 - b + b * norm));
    }
  }
  return out;
}

retrieval::RankedList Bm25Index::rank(std::string_view query, std::size_t top_n,
                                      const std::set<std::string>& exclude) const {
  auto s = scores(query);
  retrieval::RankedList out;
  for (std::size_t d = 0; d < ids_.size(); ++d) {
    if (s[d] > 0 && !exclude.contains(ids_[d])) out.push_back({ids_[d], s[d], 0});
  }
  retrieval::sort_ranked(out, popularity_);
  if (out.size() > top_n) out.resize(top_n);
  return out;
}

Bm25Index index_catalog(const catalog::Catalog& catalog, Bm25Params params) {
  std::vector<std::pair<std::string, std::string>> docs;
  std::unordered_map<std::string, double> pop;
  for (const auto& t : catalog.tracks()) {
    docs.emplace_back(t.track_id, catalog::render_text_doc(t));
    pop[t.track_id] = t.popularity.value_or(0.0);
  }
  Bm25Index index(std::move(docs), params);
  index.set_popularity(std::move(pop));
  return index;
}

}  // namespace talkplay::bm25
