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
#include <memory>
#include <string>
#include <vector>

#include "talkplay/catalog.hpp"
#include "talkplay/config.hpp"
#include "talkplay/conversation.hpp"

// Conversation synthesis through an external text-generation endpoint.
namespace talkplay::synth {

// Endpoint failure (connection, HTTP status, timeout).
class TransportError : public Error {
 public:
  using Error::Error;
};

// The endpoint answered but no attempt produced a valid conversation.
class SchemaError : public Error {
 public:
  using Error::Error;
};

struct LlmClientSpec {
  std::string endpoint;  // http(s)://host[:port]/path
  std::string model;
  std::string key_env = "TALKPLAY_LLM_KEY";  // name of the variable holding the key
  std::string prompt_template = "playlist-conversation-v1";
  double timeout_s = 60.0;
  std::uint32_t max_retries = 2;  // attempts = max_retries + 1
  std::uint32_t max_in_flight = 4;
  std::string response_field = "text";  // JSON field carrying the completion

  // Reads the [llm] section. Throws InvalidArgument if a key is stored
  // inline (`api_key`) instead of referenced through key_env.
  static LlmClientSpec from_config(const Config& config);
};

// One request/response exchange with a text endpoint.
class LlmTransport {
 public:
  virtual ~LlmTransport() = default;
  // Returns the raw completion text; throws TransportError.
  virtual std::string complete(const std::string& prompt) = 0;
};

// POSTs {"model", "prompt"} as JSON with a bearer token taken from the
// environment at call time, and reads `response_field` from the JSON reply.
std::unique_ptr<LlmTransport> make_http_transport(const LlmClientSpec& spec);

// Renders the synthesis prompt: instructions, then the playlist and its
// negative set as id -> description maps.
std::string render_synthesis_prompt(const catalog::Playlist& playlist,
                                    const catalog::Catalog& catalog,
                                    const std::vector<std::string>& negatives);

// Description block for one track as it appears inside the prompt.
std::string track_block(const catalog::Track& track);

// Extracts the first JSON list of {role, content} objects in `answer`.
// Throws SchemaError when there is none or it is malformed.
std::vector<Turn> parse_llm_answer(const std::string& answer);

// Renders, sends and validates, retrying up to spec.max_retries times on
// schema or validation failures. Transport failures are retried the same
// way and rethrown as TransportError after the last attempt. Concurrent
// callers sharing one spec are limited to spec.max_in_flight requests.
Conversation synthesize_llm(const catalog::Playlist& playlist, const catalog::Catalog& catalog,
                            const LlmClientSpec& spec, LlmTransport& transport,
                            std::uint64_t negative_seed = 0, std::size_t n_negatives = 10);

}  // namespace talkplay::synth
