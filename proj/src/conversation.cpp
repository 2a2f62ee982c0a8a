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

#include "talkplay/conversation.hpp"

#include <fstream>

#include "talkplay/common.hpp"

namespace talkplay::synth {

using nlohmann::json;

std::string_view role_name(Role r) {
  switch (r) {
    case Role::kUser: return "user";
    case Role::kMusic: return "music";
    case Role::kAssistant: return "assistant";
  }
  return "unknown";
}

Role parse_role(std::string_view name) {
  if (name == "user") return Role::kUser;
  if (name == "music") return Role::kMusic;
  if (name == "assistant") return Role::kAssistant;
  throw ParseError("unknown role '" + std::string(name) + "'");
}

Conversation normalize_turn_order(Conversation conv) {
  auto& t = conv.turns;
  for (std::size_t i = 0; i + 2 < t.size(); ++i) {
    if (t[i].role == Role::kUser && t[i + 1].role == Role::kAssistant &&
        t[i + 2].role == Role::kMusic) {
      std::swap(t[i + 1], t[i + 2]);
      i += 2;
    }
  }
  return conv;
}

std::vector<Exchange> exchanges(const Conversation& conv) {
  const auto& t = conv.turns;
  if (t.size() % 3 != 0) {
    throw InvalidArgument("conversation " + conv.conversation_id +
                          ": turn count is not a multiple of three");
  }
  std::vector<Exchange> out;
  for (std::size_t i = 0; i < t.size(); i += 3) {
    if (t[i].role != Role::kUser || t[i + 1].role != Role::kMusic ||
        t[i + 2].role != Role::kAssistant) {
      throw InvalidArgument("conversation " + conv.conversation_id + ": turn " +
                            std::to_string(i) + " does not start a user/music/assistant triplet");
    }
    out.push_back({t[i].content, t[i + 1].content, t[i + 2].content});
  }
  return out;
}

Conversation from_exchanges(std::string conversation_id, std::string source_playlist_id,
                            const std::vector<Exchange>& exs) {
  Conversation conv{std::move(conversation_id), std::move(source_playlist_id), {}};
  for (const auto& e : exs) {
    conv.turns.push_back({Role::kUser, e.query});
    conv.turns.push_back({Role::kMusic, e.track_id});
    conv.turns.push_back({Role::kAssistant, e.response});
  }
  return conv;
}

json turns_to_json(const std::vector<Turn>& turns) {
  json arr = json::array();
  for (const auto& t : turns) {
    arr.push_back({{"role", std::string(role_name(t.role))}, {"content", t.content}});
  }
  return arr;
}

std::vector<Turn> turns_from_json(const json& j) {
  if (!j.is_array()) throw ParseError("turns: expected a JSON array");
  std::vector<Turn> turns;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const json& o = j[i];
    if (!o.is_object() || !o.contains("role") || !o.contains("content") ||
        !o["role"].is_string() || !o["content"].is_string()) {
      throw ParseError("turn " + std::to_string(i) + ": expected {role, content} strings");
    }
    turns.push_back({parse_role(o["role"].get<std::string>()), o["content"].get<std::string>()});
  }
  return turns;
}

json conversation_to_json(const Conversation& conv) {
  return {{"conversation_id", conv.conversation_id},
          {"source_playlist_id", conv.source_playlist_id},
          {"turns", turns_to_json(conv.turns)}};
}

Conversation conversation_from_json(const json& j) {
  Conversation conv;
  if (j.is_array()) {
    conv.turns = turns_from_json(j);
    return conv;
  }
  if (!j.is_object() || !j.contains("turns")) {
    throw ParseError("conversation: expected object with 'turns' or a turn array");
  }
  conv.conversation_id = j.value("conversation_id", "");
  conv.source_playlist_id = j.value("source_playlist_id", "");
  conv.turns = turns_from_json(j["turns"]);
  return conv;
}

std::vector<Conversation> load_conversations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  std::vector<Conversation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      Conversation c = normalize_turn_order(conversation_from_json(json::parse(line)));
      if (c.conversation_id.empty()) c.conversation_id = "line-" + std::to_string(line_no);
      out.push_back(std::move(c));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void save_conversations(const std::vector<Conversation>& convs,
                        const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& c : convs) out << conversation_to_json(c).dump() << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace talkplay::synth
