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

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "talkplay/catalog.hpp"
#include "talkplay/config.hpp"
#include "talkplay/conversation.hpp"
#include "talkplay/retrieval.hpp"
#include "talkplay/seqmodel.hpp"

namespace httplib {
class Server;
}

// Chat sessions over a trained model: generation, retrieval and a small
// HTTP+JSON API.
namespace talkplay::service {

struct Session {
  std::string session_id;
  std::string created_at;  // ISO-8601 UTC
  std::vector<synth::Turn> turns;  // canonical user, music, assistant order
  std::set<std::string> shown_track_ids;
  seq::SamplingConfig sampling;
  std::uint64_t seed = 0;
  std::size_t exhaustion_resets = 0;
};

nlohmann::json session_to_json(const Session& s);
Session session_from_json(const nlohmann::json& j);

// Persists sessions. Implementations must be safe for concurrent calls.
class SessionStore {
 public:
  virtual ~SessionStore() = default;
  virtual void put(const Session& s) = 0;
  virtual std::optional<Session> get(const std::string& session_id) const = 0;
  virtual std::vector<std::string> ids() const = 0;
};

class MemorySessionStore : public SessionStore {
 public:
  void put(const Session& s) override;
  std::optional<Session> get(const std::string& session_id) const override;
  std::vector<std::string> ids() const override;

 private:
  mutable std::mutex mu_;
  std::map<std::string, Session> sessions_;
};

// Append-only JSON-lines file; the latest record per session wins. The file
// is replayed on open, so sessions survive restarts.
class FileSessionStore : public SessionStore {
 public:
  explicit FileSessionStore(std::filesystem::path path);
  void put(const Session& s) override;
  std::optional<Session> get(const std::string& session_id) const override;
  std::vector<std::string> ids() const override;

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::map<std::string, Session> sessions_;
};

enum class Feedback { kNone, kAccept, kReject };
Feedback parse_feedback(std::string_view text);  // throws InvalidArgument

struct Recommendation {
  std::string track_id;
  std::string title;
  std::string artist;
  double score = 0;
  std::vector<std::string> matched_modalities;
};

struct ChatResponse {
  std::vector<Recommendation> recommendations;
  std::string assistant_text;
  std::vector<std::string> generated_music_tokens;  // surface strings
  std::size_t turn_index = 0;  // 1-based exchange number
  bool no_recommendation = false;
  bool exclusion_reset = false;  // every track had been shown; exclusions cleared
};

nlohmann::json response_to_json(const ChatResponse& r);

struct ServiceOptions {
  retrieval::WeightProfile weights = retrieval::quadratic_coarse_to_fine();
  std::size_t top_n = 5;
  std::size_t max_attempts = 3;  // generation attempts before giving up
  std::size_t max_response_tokens = 96;
  seq::SamplingConfig sampling;
  std::uint64_t seed = 0;  // base for session seeds
};

// Text prefixed to the user's message after reject feedback.
inline constexpr std::string_view kRejectPhrase = "Play something different.";

class ChatService {
 public:
  // The model, index and catalog must outlive the service.
  ChatService(const seq::Params<float>& model, tok::Vocabulary vocab,
              const retrieval::TokenIndex& index, const catalog::Catalog& catalog,
              std::shared_ptr<SessionStore> store, ServiceOptions options = {});

  // Throws InvalidArgument for invalid sampling overrides in `config`
  // (keys temperature, top_p, repetition_penalty, seed).
  std::string create_session(const nlohmann::json& config = nlohmann::json::object());
  // Throws NotFound for an unknown session and InvalidArgument for empty
  // text.
  ChatResponse post_message(const std::string& session_id, const std::string& text,
                            Feedback feedback = Feedback::kNone);
  // History with resolved track metadata. Throws NotFound.
  nlohmann::json get_session(const std::string& session_id) const;
  // Throws NotFound.
  nlohmann::json get_track(const std::string& track_id) const;

  // Token ids the model sees for the next query (history + query).
  std::vector<tok::TokenId> render_history(const Session& s, const std::string& query) const;

  const ServiceOptions& options() const { return options_; }

 private:
  std::mutex& session_mutex(const std::string& id);
  std::string new_session_id();

  const seq::Params<float>& model_;
  tok::Vocabulary vocab_;
  const retrieval::TokenIndex& index_;
  const catalog::Catalog& catalog_;
  std::shared_ptr<SessionStore> store_;
  ServiceOptions options_;
  std::mutex locks_mu_;
  std::map<std::string, std::unique_ptr<std::mutex>> locks_;
  std::mutex id_mu_;
  std::uint64_t id_counter_ = 0;
};

// Registers the /v1 routes and /healthz on `server`.
void register_routes(httplib::Server& server, ChatService& service);

// Reads [service] settings (checkpoint, index, catalog, weights, port,
// host, top_n, session_store, seed, temperature, top_p,
// repetition_penalty) and applies TALKPLAY_* environment overrides such as
// TALKPLAY_SERVICE_PORT.
Config load_service_config(const std::filesystem::path& path);

}  // namespace talkplay::service
