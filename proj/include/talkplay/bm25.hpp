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

#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "talkplay/catalog.hpp"
#include "talkplay/retrieval.hpp"

// Okapi BM25 over short track documents.
namespace talkplay::bm25 {

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

// Lowercased ASCII alphanumeric runs; every other byte separates terms.
// Bytes >= 0x80 are kept inside terms so UTF-8 words survive intact.
std::vector<std::string> tokenize(std::string_view text);

class Bm25Index {
 public:
  // (track_id, document) pairs. Throws InvalidArgument on an empty corpus.
  Bm25Index(std::vector<std::pair<std::string, std::string>> docs, Bm25Params params = {});

  // idf = ln((N - df + 0.5) / (df + 0.5) + 1), which is never negative.
  double idf(std::string_view term) const;
  // Score of every document, in corpus order. Repeated query terms count
  // once per occurrence.
  std::vector<double> scores(std::string_view query) const;
  // Documents with positive score, ranked by score then popularity desc
  // then track_id asc.
  retrieval::RankedList rank(std::string_view query, std::size_t top_n,
                             const std::set<std::string>& exclude = {}) const;

  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  void set_popularity(std::unordered_map<std::string, double> popularity) {
    popularity_ = std::move(popularity);
  }

 private:
  Bm25Params params_;
  std::vector<std::string> ids_;
  std::vector<std::unordered_map<std::string, std::uint32_t>> tf_;
  std::vector<double> length_;
  double avg_length_ = 0;
  std::unordered_map<std::string, std::uint32_t> df_;
  std::unordered_map<std::string, double> popularity_;
};

// Index over render_text_doc of every catalog track, with popularity.
Bm25Index index_catalog(const catalog::Catalog& catalog, Bm25Params params = {});

}  // namespace talkplay::bm25
