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
#include <span>
#include <vector>

#include "talkplay/conversation.hpp"
#include "talkplay/tokenizer.hpp"

namespace talkplay::tok {

// Which part of an exchange a token belongs to.
enum class Segment : std::uint8_t { kUser = 0, kMusic = 1, kAssistant = 2 };

struct RenderedSequence {
  std::vector<TokenId> ids;
  std::vector<Segment> segments;
  // Offset of each exchange's first token (its user marker).
  std::vector<std::size_t> exchange_starts;
};

// Appends  <|user|> query  <start_of_music> 5 ids <end_of_music>  <|assistant|> response.
void append_exchange(const Vocabulary& vocab, const ItemTokens& items,
                     const synth::Exchange& ex, RenderedSequence& out);
void append_user_query(const Vocabulary& vocab, std::string_view query, RenderedSequence& out);

// Renders the whole conversation after normalizing turn order. Throws
// InvalidArgument when a music turn's track has no tokens.
RenderedSequence render_conversation(const synth::Conversation& conv, const Vocabulary& vocab,
                                     const ItemTokens& items);

// Splits a rendered conversation into training windows of at most
// `max_len` tokens, cutting only at exchange boundaries. A single exchange
// longer than max_len is truncated from the right.
std::vector<RenderedSequence> window_sequence(const RenderedSequence& seq, std::size_t max_len);

// History (ground-truth exchanges) + the current query, trimmed from the left
// at exchange boundaries so that at least `reserve` positions remain free.
RenderedSequence render_prompt(std::span<const synth::Exchange> history,
                               std::string_view query, const Vocabulary& vocab,
                               const ItemTokens& items, std::size_t max_len,
                               std::size_t reserve);

// 1 where a token contributes to the training loss. `all_tokens` trains on
// the full sequence; otherwise only music blocks and assistant text count.
std::vector<std::uint8_t> loss_mask(const RenderedSequence& seq, bool all_tokens);

}  // namespace talkplay::tok
