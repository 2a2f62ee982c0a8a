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

#include "talkplay/service.hpp"

#include <ctime>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include <httplib.h>

#include "talkplay/evalharness.hpp"
#include "talkplay/render.hpp"

namespace talkplay::service {

using nlohmann::json;

namespace {

json sampling_to_json(const seq::SamplingConfig& s) {
  return {{"temperature", s.temperature},
          {"top_p", s.top_p},
          {"repetition_penalty", s.repetition_penalty}};
}

std::string now_iso8601() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

bool valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 0;
    if (len == 0 || i + len > s.size()) return false;
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(s[i + k]) >> 6) != 0x2) return false;
    }
    i += len;
  }
  return true;
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

json track_json(const catalog::Track& t) {
  json j = {{"track_id", t.track_id}, {"title", t.title}, {"artist", t.artist},
            {"album", t.album},       {"tags", t.tags}};
  j["year"] = t.year ? json(*t.year) : json(nullptr);
  j["popularity"] = t.popularity ? json(*t.popularity) : json(nullptr);
  return j;
}

}  // namespace

json session_to_json(const Session& s) {
  return {{"session_id", s.session_id},
          {"created_at", s.created_at},
          {"turns", synth::turns_to_json(s.turns)},
          {"shown_track_ids", s.shown_track_ids},
          {"sampling", sampling_to_json(s.sampling)},
          {"seed", s.seed},
          {"exhaustion_resets", s.exhaustion_resets}};
}

Session session_from_json(const json& j) {
  try {
    Session s;
    s.session_id = j.at("session_id").get<std::string>();
    s.created_at = j.at("created_at").get<std::string>();
    s.turns = synth::turns_from_json(j.at("turns"));
    s.shown_track_ids = j.at("shown_track_ids").get<std::set<std::string>>();
    const auto& sp = j.at("sampling");
    s.sampling.temperature = sp.at("temperature").get<double>();
    s.sampling.top_p = sp.at("top_p").get<double>();
    s.sampling.repetition_penalty = sp.at("repetition_penalty").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.exhaustion_resets = j.value("exhaustion_resets", std::size_t{0});
    return s;
  } catch (const json::exception& e) {
    throw ParseError(std::string("session record: ") + e.what());
  }
}

void MemorySessionStore::put(const Session& s) {
  std::lock_guard lock(mu_);
  sessions_[s.session_id] = s;
}

std::optional<Session> MemorySessionStore::get(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> MemorySessionStore::ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, s] : sessions_) out.push_back(id);
  return out;
}

FileSessionStore::FileSessionStore(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;  // a new store
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      Session s = session_from_json(json::parse(line));
      sessions_[s.session_id] = std::move(s);
    } catch (const std::exception& e) {
      throw LoadError(path_.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void FileSessionStore::put(const Session& s) {
  std::lock_guard lock(mu_);
  std::ofstream out(path_, std::ios::app);
  out << session_to_json(s).dump() << '\n';
  out.flush();
  if (!out) throw Error("cannot append to " + path_.string());
  sessions_[s.session_id] = s;
}

std::optional<Session> FileSessionStore::get(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> FileSessionStore::ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, s] : sessions_) out.push_back(id);
  return out;
}

Feedback parse_feedback(std::string_view text) {
  if (text.empty() || text == "none") return Feedback::kNone;
  if (text == "accept") return Feedback::kAccept;
  if (text == "reject") return Feedback::kReject;
  throw InvalidArgument("feedback must be accept, reject or none");
}

json response_to_json(const ChatResponse& r) {
  json recs = json::array();
  for (const auto& rec : r.recommendations) {
    recs.push_back({{"track_id", rec.track_id},
                    {"title", rec.title},
                    {"artist", rec.artist},
                    {"score", rec.score},
                    {"matched_modalities", rec.matched_modalities}});
  }
  return {{"recommendations", recs},
          {"assistant_text", r.assistant_text},
          {"generated_music_tokens", r.generated_music_tokens},
          {"turn_index", r.turn_index},
          {"no_recommendation", r.no_recommendation},
          {"exclusion_reset", r.exclusion_reset}};
}

ChatService::ChatService(const seq::Params<float>& model, tok::Vocabulary vocab,
                         const retrieval::TokenIndex& index, const catalog::Catalog& catalog,
                         std::shared_ptr<SessionStore> store, ServiceOptions options)
    : model_(model),
      vocab_(vocab),
      index_(index),
      catalog_(catalog),
      store_(std::move(store)),
      options_(std::move(options)) {
  if (model.config.vocab_size != vocab.size()) {
    throw InvalidArgument("service: model vocabulary does not match the token vocabulary");
  }
  if (!(index.vocab() == vocab)) {
    throw InvalidArgument("service: index vocabulary does not match the model");
  }
  options_.weights.validate();
  options_.sampling.validate();
  if (options_.top_n == 0 || options_.max_attempts == 0) {
    throw InvalidArgument("service: top_n and max_attempts must be >= 1");
  }
}

std::mutex& ChatService::session_mutex(const std::string& id) {
  std::lock_guard lock(locks_mu_);
  auto& slot = locks_[id];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

std::string ChatService::new_session_id() {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << rng();
  return os.str();
}

std::string ChatService::create_session(const json& config) {
  if (!config.is_object()) throw InvalidArgument("session config must be a JSON object");
  Session s;
  s.sampling = options_.sampling;
  try {
    if (config.contains("temperature")) s.sampling.temperature = config.at("temperature").get<double>();
    if (config.contains("top_p")) s.sampling.top_p = config.at("top_p").get<double>();
    if (config.contains("repetition_penalty")) {
      s.sampling.repetition_penalty = config.at("repetition_penalty").get<double>();
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("sampling overrides must be numbers: ") + e.what());
  }
  s.sampling.validate();
  {
    std::lock_guard lock(id_mu_);
    s.seed = mix_seed(options_.seed, id_counter_++);
  }
  if (config.contains("seed")) {
    const auto& seed = config.at("seed");
    if (!seed.is_number_integer() || (!seed.is_number_unsigned() && seed.get<std::int64_t>() < 0)) {
      throw InvalidArgument("seed must be a non-negative integer");
    }
    s.seed = seed.get<std::uint64_t>();
  }
  do {
    s.session_id = new_session_id();
  } while (store_->get(s.session_id));
  s.created_at = now_iso8601();
  store_->put(s);
  return s.session_id;
}

std::vector<tok::TokenId> ChatService::render_history(const Session& s,
                                                      const std::string& query) const {
  auto history = synth::exchanges(synth::Conversation{"", "", s.turns});
  const std::size_t ctx = model_.config.context_len;
  const std::size_t reserve = std::min(ctx / 2, std::size_t{8} + options_.max_response_tokens);
  return tok::render_prompt(history, query, vocab_, index_.items(), ctx, reserve).ids;
}

ChatResponse ChatService::post_message(const std::string& session_id, const std::string& text,
                                       Feedback feedback) {
  std::lock_guard session_lock(session_mutex(session_id));
  auto stored = store_->get(session_id);
  if (!stored) throw NotFound("no session " + session_id);
  Session s = std::move(*stored);

  std::string query = trim(text);
  if (feedback == Feedback::kReject) {
    query = query.empty() ? std::string(kRejectPhrase) : std::string(kRejectPhrase) + " " + query;
  }
  if (query.empty()) throw InvalidArgument("message text must not be empty");

  ChatResponse resp;
  resp.turn_index = s.turns.size() / 3 + 1;
  const std::uint64_t turn_seed = mix_seed(s.seed, resp.turn_index);
  const auto prompt = render_history(s, query);

  std::optional<tok::MusicTokenSeq> block;
  retrieval::RankedList ranked;
  for (std::size_t attempt = 0; attempt < options_.max_attempts && ranked.empty(); ++attempt) {
    block = eval::generate_music_block(model_, vocab_, prompt, s.sampling,
                                       mix_seed(turn_seed, attempt));
    if (!block) continue;
    if (s.shown_track_ids.size() >= index_.size()) {
      s.shown_track_ids.clear();
      ++s.exhaustion_resets;
      resp.exclusion_reset = true;
    }
    ranked = index_.recommend(*block, options_.weights, options_.top_n, s.shown_track_ids);
  }
  if (block) {
    for (tok::TokenId id : block->ids) resp.generated_music_tokens.push_back(tok::token_surface(vocab_, id));
  }
  if (ranked.empty()) {
    resp.no_recommendation = true;
    resp.assistant_text = "Sorry, I could not find a track for that request.";
    return resp;
  }

  for (const auto& r : ranked) {
    const catalog::Track& t = catalog_.at(r.track_id);
    Recommendation rec{t.track_id, t.title, t.artist, r.score, {}};
    for (std::size_t m = 0; m < kNumModalities; ++m) {
      if (r.matched & (1u << m)) rec.matched_modalities.emplace_back(modality_name(kModalityOrder[m]));
    }
    resp.recommendations.push_back(std::move(rec));
  }
  const catalog::Track& top = catalog_.at(ranked.front().track_id);

  // Assistant text continues after the generated block.
  std::vector<tok::TokenId> ids = prompt;
  ids.push_back(vocab_.som());
  ids.insert(ids.end(), block->ids.begin(), block->ids.end());
  ids.push_back(vocab_.eom());
  ids.push_back(vocab_.assistant());
  seq::GenerateOptions go;
  go.sampling = s.sampling;
  go.max_new = options_.max_response_tokens;
  go.seed = mix_seed(turn_seed, 1000);
  go.stop_tokens = {vocab_.user(), vocab_.assistant(), vocab_.som()};
  seq::MusicGrammar grammar(vocab_);
  auto out = seq::generate(model_, ids, go, &grammar);
  std::string reply = trim(tok::decode_text(vocab_, out));
  if (reply.empty() || !valid_utf8(reply)) reply = "Here is " + top.title + " by " + top.artist + ".";
  resp.assistant_text = reply;

  s.turns.push_back({synth::Role::kUser, query});
  s.turns.push_back({synth::Role::kMusic, top.track_id});
  s.turns.push_back({synth::Role::kAssistant, reply});
  s.shown_track_ids.insert(top.track_id);
  store_->put(s);
  return resp;
}

json ChatService::get_session(const std::string& session_id) const {
  auto s = store_->get(session_id);
  if (!s) throw NotFound("no session " + session_id);
  json j = session_to_json(*s);
  for (auto& turn : j["turns"]) {
    if (turn["role"] == "music") {
      if (const auto* t = catalog_.find(turn["content"].get<std::string>())) {
        turn["track"] = track_json(*t);
      }
    }
  }
  return j;
}

json ChatService::get_track(const std::string& track_id) const {
  const auto* t = catalog_.find(track_id);
  if (!t) throw NotFound("no track " + track_id);
  json j = track_json(*t);
  auto it = index_.items().find(track_id);
  if (it != index_.items().end()) j["music_tokens"] = tok::item_surface(vocab_, it->second);
  return j;
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const NotFound& e) {
    send_json(res, 404, {{"error", e.what()}});
  } catch (const InvalidArgument& e) {
    send_json(res, 400, {{"error", e.what()}});
  } catch (const ParseError& e) {
    send_json(res, 400, {{"error", e.what()}});
  } catch (const json::exception& e) {
    send_json(res, 400, {{"error", std::string("invalid JSON: ") + e.what()}});
  } catch (const std::exception& e) {
    send_json(res, 500, {{"error", e.what()}});
  }
}

json parse_body(const httplib::Request& req) {
  if (trim(req.body).empty()) return json::object();
  json j = json::parse(req.body);
  if (!j.is_object()) throw InvalidArgument("request body must be a JSON object");
  return j;
}

}  // namespace

void register_routes(httplib::Server& server, ChatService& service) {
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Headers", "Content-Type"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
  });
  server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}});
  });
  server.Post("/v1/sessions", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      std::string id = service.create_session(parse_body(req));
      send_json(res, 201, {{"session_id", id}});
    });
  });
  server.Post(R"(/v1/sessions/([^/]+)/messages)",
              [&service](const httplib::Request& req, httplib::Response& res) {
                guarded(res, [&] {
                  json body = parse_body(req);
                  std::string text = body.value("text", std::string());
                  Feedback fb = Feedback::kNone;
                  if (body.contains("feedback") && !body["feedback"].is_null()) {
                    fb = parse_feedback(body["feedback"].get<std::string>());
                  }
                  auto r = service.post_message(req.matches[1], text, fb);
                  send_json(res, 200, response_to_json(r));
                });
              });
  server.Get(R"(/v1/sessions/([^/]+))",
             [&service](const httplib::Request& req, httplib::Response& res) {
               guarded(res, [&] { send_json(res, 200, service.get_session(req.matches[1])); });
             });
  server.Get(R"(/v1/tracks/([^/]+))",
             [&service](const httplib::Request& req, httplib::Response& res) {
               guarded(res, [&] { send_json(res, 200, service.get_track(req.matches[1])); });
             });
}

Config load_service_config(const std::filesystem::path& path) {
  Config cfg = path.empty() ? Config() : Config::load(path);
  cfg.apply_env_overrides("TALKPLAY_",
                          {"service.checkpoint", "service.index", "service.catalog",
                           "service.weights", "service.port", "service.host", "service.top_n",
                           "service.session_store", "service.seed", "service.temperature",
                           "service.top_p", "service.repetition_penalty"});
  return cfg;
}

}  // namespace talkplay::service
