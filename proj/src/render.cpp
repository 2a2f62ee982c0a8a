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

#include "talkplay/render.hpp"

#include <algorithm>

namespace talkplay::tok {
namespace {

void push(RenderedSequence& out, TokenId id, Segment s) {
  out.ids.push_back(id);
  out.segments.push_back(s);
}

void push_text(RenderedSequence& out, std::string_view text, Segment s) {
  for (TokenId id : encode_text(text)) push(out, id, s);
}

void require_bytes(const Vocabulary& vocab) {
  if (vocab.base_size() < Vocabulary::kByteVocab) {
    throw InvalidArgument("rendering text needs a byte-level base vocabulary (>= 256)");
  }
}

}  // namespace

void append_user_query(const Vocabulary& vocab, std::string_view query, RenderedSequence& out) {
  require_bytes(vocab);
  out.exchange_starts.push_back(out.ids.size());
  push(out, vocab.user(), Segment::kUser);
  push_text(out, query, Segment::kUser);
}

void append_exchange(const Vocabulary& vocab, const ItemTokens& items, const synth::Exchange& ex,
                     RenderedSequence& out) {
  auto it = items.find(ex.track_id);
  if (it == items.end()) throw InvalidArgument("no music tokens for track " + ex.track_id);
  append_user_query(vocab, ex.query, out);
  push(out, vocab.som(), Segment::kMusic);
  for (TokenId id : it->second.ids) push(out, id, Segment::kMusic);
  push(out, vocab.eom(), Segment::kMusic);
  push(out, vocab.assistant(), Segment::kAssistant);
  push_text(out, ex.response, Segment::kAssistant);
}

RenderedSequence render_conversation(const synth::Conversation& conv, const Vocabulary& vocab,
                                     const ItemTokens& items) {
  RenderedSequence out;
  for (const auto& ex : synth::exchanges(synth::normalize_turn_order(conv))) {
    append_exchange(vocab, items, ex, out);
  }
  return out;
}

namespace {

RenderedSequence slice(const RenderedSequence& seq, std::size_t begin, std::size_t end,
                       std::size_t first_ex, std::size_t last_ex) {
  RenderedSequence w;
  w.ids.assign(seq.ids.begin() + begin, seq.ids.begin() + end);
  w.segments.assign(seq.segments.begin() + begin, seq.segments.begin() + end);
  for (std::size_t e = first_ex; e < last_ex; ++e) {
    w.exchange_starts.push_back(seq.exchange_starts[e] - begin);
  }
  return w;
}

}  // namespace

std::vector<RenderedSequence> window_sequence(const RenderedSequence& seq, std::size_t max_len) {
  std::vector<RenderedSequence> out;
  const std::size_t n_ex = seq.exchange_starts.size();
  auto ex_end = [&](std::size_t e) {
    return e + 1 < n_ex ? seq.exchange_starts[e + 1] : seq.ids.size();
  };
  std::size_t e = 0;
  while (e < n_ex) {
    std::size_t begin = seq.exchange_starts[e];
    std::size_t last = e;
    while (last + 1 < n_ex && ex_end(last + 1) - begin <= max_len) ++last;
    std::size_t end = std::min(ex_end(last), begin + max_len);
    out.push_back(slice(seq, begin, end, e, last + 1));
    e = last + 1;
  }
  return out;
}

RenderedSequence render_prompt(std::span<const synth::Exchange> history, std::string_view query,
                               const Vocabulary& vocab, const ItemTokens& items,
                               std::size_t max_len, std::size_t reserve) {
  RenderedSequence full;
  for (const auto& ex : history) append_exchange(vocab, items, ex, full);
  append_user_query(vocab, query, full);
  const std::size_t budget = max_len > reserve ? max_len - reserve : 0;
  if (full.ids.size() <= budget) return full;
  // Drop whole exchanges from the front; the current query is always kept.
  const std::size_t n_ex = full.exchange_starts.size();
  for (std::size_t e = 1; e < n_ex; ++e) {
    if (full.ids.size() - full.exchange_starts[e] <= budget) {
      return slice(full, full.exchange_starts[e], full.ids.size(), e, n_ex);
    }
  }
  // Even the query alone is too long: keep its tail.
  std::size_t begin = full.ids.size() - budget;
  RenderedSequence w = slice(full, begin, full.ids.size(), n_ex, n_ex);
  if (!w.ids.empty()) {
    w.ids.front() = vocab.user();
    w.segments.front() = Segment::kUser;
  }
  w.exchange_starts = {0};
  return w;
}

std::vector<std::uint8_t> loss_mask(const RenderedSequence& seq, bool all_tokens) {
  std::vector<std::uint8_t> mask(seq.ids.size(), 1);
  if (all_tokens) return mask;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = seq.segments[i] == Segment::kUser ? 0 : 1;
  }
  return mask;
}

}  // namespace talkplay::tok
