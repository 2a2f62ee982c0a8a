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

#include "talkplay/llm_client.hpp"

#include <condition_variable>
#include <cstdlib>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "talkplay/datasynth.hpp"

namespace talkplay::synth {

using nlohmann::json;

LlmClientSpec LlmClientSpec::from_config(const Config& config) {
  if (config.has("llm.api_key") || config.has("llm.key")) {
    throw InvalidArgument("llm: keys must be referenced through key_env, not stored inline");
  }
  LlmClientSpec s;
  s.endpoint = config.get_string("llm.endpoint", "");
  if (s.endpoint.empty()) throw InvalidArgument("llm: endpoint is required");
  s.model = config.get_string("llm.model", "");
  s.key_env = config.get_string("llm.key_env", s.key_env);
  s.prompt_template = config.get_string("llm.prompt_template", s.prompt_template);
  s.timeout_s = config.get_double("llm.timeout_s", s.timeout_s);
  s.max_retries = static_cast<std::uint32_t>(config.get_int("llm.max_retries", s.max_retries));
  s.max_in_flight =
      static_cast<std::uint32_t>(config.get_int("llm.max_in_flight", s.max_in_flight));
  s.response_field = config.get_string("llm.response_field", s.response_field);
  if (s.timeout_s <= 0) throw InvalidArgument("llm: timeout_s must be positive");
  if (s.max_in_flight == 0) throw InvalidArgument("llm: max_in_flight must be >= 1");
  if (s.prompt_template != "playlist-conversation-v1") {
    throw InvalidArgument("llm: unknown prompt_template '" + s.prompt_template + "'");
  }
  return s;
}

namespace {

class HttpTransport : public LlmTransport {
 public:
  explicit HttpTransport(LlmClientSpec spec) : spec_(std::move(spec)) {
    auto scheme_end = spec_.endpoint.find("://");
    if (scheme_end == std::string::npos) {
      throw InvalidArgument("llm: endpoint must start with http:// or https://");
    }
    auto path_start = spec_.endpoint.find('/', scheme_end + 3);
    origin_ = spec_.endpoint.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : spec_.endpoint.substr(path_start);
  }

  std::string complete(const std::string& prompt) override {
    httplib::Client client(origin_);
    auto secs = static_cast<time_t>(spec_.timeout_s);
    client.set_connection_timeout(secs, 0);
    client.set_read_timeout(secs, 0);
    httplib::Headers headers;
    if (const char* key = std::getenv(spec_.key_env.c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    json body = {{"model", spec_.model}, {"prompt", prompt}};
    auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (!res) throw TransportError("llm: request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) {
      throw TransportError("llm: HTTP " + std::to_string(res->status));
    }
    try {
      return json::parse(res->body).at(spec_.response_field).get<std::string>();
    } catch (const json::exception& e) {
      throw TransportError(std::string("llm: unexpected reply body: ") + e.what());
    }
  }

 private:
  LlmClientSpec spec_;
  std::string origin_;
  std::string path_;
};

// Bounds concurrent requests per endpoint.
class InFlightLimiter {
 public:
  static InFlightLimiter& for_endpoint(const std::string& endpoint) {
    static std::mutex mu;
    static std::map<std::string, std::unique_ptr<InFlightLimiter>> limiters;
    std::lock_guard lock(mu);
    auto& slot = limiters[endpoint];
    if (!slot) slot = std::make_unique<InFlightLimiter>();
    return *slot;
  }

  void acquire(std::uint32_t limit) {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return active_ < limit; });
    ++active_;
  }
  void release() {
    {
      std::lock_guard lock(mu_);
      --active_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::uint32_t active_ = 0;
};

constexpr std::string_view kInstructions =
    R"(You write music recommendation dialogues. Return only a JSON list of objects, each with "role" and "content".

Rules:
1. Each exchange is a user request, then one "music" object whose content is a track id from the playlist below, then one "assistant" object briefly explaining the choice.
2. Recommend exactly one track per exchange. Requests may mention artists, titles, genres, moods, lyrical themes or sound.
3. Cover at least half of the playlist tracks.
4. At least once, recommend a track from the negative set, have the user turn it down, and recover with a playlist track.
5. Use only track ids listed below.
)";

}  // namespace

std::unique_ptr<LlmTransport> make_http_transport(const LlmClientSpec& spec) {
  return std::make_unique<HttpTransport>(spec);
}

std::string track_block(const catalog::Track& t) {
  std::ostringstream os;
  os << "Metadata:\n  Title: " << t.title << "\n  Artist: " << t.artist;
  if (!t.album.empty()) os << "\n  Album: " << t.album;
  if (t.year) os << "\n  Year: " << *t.year;
  if (t.popularity) {
    std::ostringstream p;
    p.setf(std::ios::fixed);
    p.precision(1);
    p << *t.popularity;
    os << "\n  Popularity: " << p.str();
  }
  if (!t.tags.empty()) {
    os << "\nTag: ";
    for (std::size_t i = 0; i < t.tags.size(); ++i) os << (i ? ", " : "") << t.tags[i];
  }
  if (t.lyrics) os << "\nLyrics: " << *t.lyrics;
  return os.str();
}

std::string render_synthesis_prompt(const catalog::Playlist& playlist,
                                    const catalog::Catalog& catalog,
                                    const std::vector<std::string>& negatives) {
  // ordered_json keeps the playlist order in the rendered maps.
  nlohmann::ordered_json tracks = nlohmann::ordered_json::object();
  for (const auto& id : playlist.track_ids) tracks[id] = track_block(catalog.at(id));
  nlohmann::ordered_json negs = nlohmann::ordered_json::object();
  for (const auto& id : negatives) negs[id] = track_block(catalog.at(id));
  std::string out(kInstructions);
  out += "\nMusic Playlist:\n" + tracks.dump(2) + "\n\nNegative Set:\n" + negs.dump(2) +
         "\n\nANSWER:\n";
  return out;
}

std::vector<Turn> parse_llm_answer(const std::string& answer) {
  auto begin = answer.find('[');
  auto end = answer.rfind(']');
  if (begin == std::string::npos || end == std::string::npos || end < begin) {
    throw SchemaError("llm: answer contains no JSON list");
  }
  try {
    return turns_from_json(json::parse(answer.substr(begin, end - begin + 1)));
  } catch (const json::exception& e) {
    throw SchemaError(std::string("llm: malformed JSON list: ") + e.what());
  } catch (const Error& e) {
    throw SchemaError(std::string("llm: bad turn: ") + e.what());
  }
}

Conversation synthesize_llm(const catalog::Playlist& playlist, const catalog::Catalog& catalog,
                            const LlmClientSpec& spec, LlmTransport& transport,
                            std::uint64_t negative_seed, std::size_t n_negatives) {
  auto negatives = sample_negatives(playlist, catalog, n_negatives, negative_seed);
  const std::string prompt = render_synthesis_prompt(playlist, catalog, negatives);
  std::set<std::string> allowed(playlist.track_ids.begin(), playlist.track_ids.end());
  allowed.insert(negatives.begin(), negatives.end());

  auto& limiter = InFlightLimiter::for_endpoint(spec.endpoint);
  std::string last_error;
  bool transport_failed = false;
  for (std::uint32_t attempt = 0; attempt <= spec.max_retries; ++attempt) {
    std::string answer;
    limiter.acquire(spec.max_in_flight);
    try {
      answer = transport.complete(prompt);
      limiter.release();
    } catch (const TransportError& e) {
      limiter.release();
      last_error = e.what();
      transport_failed = true;
      continue;
    } catch (...) {
      limiter.release();
      throw;
    }
    transport_failed = false;
    try {
      Conversation conv;
      conv.conversation_id = playlist.playlist_id + "-llm";
      conv.source_playlist_id = playlist.playlist_id;
      conv.turns = parse_llm_answer(answer);
      conv = normalize_turn_order(std::move(conv));
      auto violations = validate_conversation(conv, catalog);
      for (const auto& t : conv.turns) {
        if (t.role == Role::kMusic && !allowed.contains(t.content)) {
          violations.push_back("track " + t.content + " is outside the playlist and negative set");
        }
      }
      if (violations.empty()) return conv;
      last_error = "invalid conversation: " + violations.front();
    } catch (const SchemaError& e) {
      last_error = e.what();
    }
  }
  if (transport_failed) throw TransportError(last_error);
  throw SchemaError("llm: no valid answer after " + std::to_string(spec.max_retries + 1) +
                    " attempts (" + last_error + ")");
}

}  // namespace talkplay::synth
