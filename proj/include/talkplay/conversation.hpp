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

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace talkplay::synth {

enum class Role { kUser, kMusic, kAssistant };

std::string_view role_name(Role r);
Role parse_role(std::string_view name);

// For user/assistant turns `content` is text; for music turns it is a track id.
struct Turn {
  Role role = Role::kUser;
  std::string content;

  friend bool operator==(const Turn&, const Turn&) = default;
};

struct Conversation {
  std::string conversation_id;
  std::string source_playlist_id;
  std::vector<Turn> turns;

  friend bool operator==(const Conversation&, const Conversation&) = default;
};

// One user -> music -> assistant triplet.
struct Exchange {
  std::string query;
  std::string track_id;
  std::string response;
};

// Rewrites user, assistant, music triplets into the canonical
// user, music, assistant order. Other shapes are left untouched.
Conversation normalize_turn_order(Conversation conv);

// Requires the canonical order; throws InvalidArgument otherwise.
std::vector<Exchange> exchanges(const Conversation& conv);
Conversation from_exchanges(std::string conversation_id, std::string source_playlist_id,
                            const std::vector<Exchange>& exchanges);

// The list-of-objects turn array: [{"role": "user", "content": "..."}, ...].
nlohmann::json turns_to_json(const std::vector<Turn>& turns);
std::vector<Turn> turns_from_json(const nlohmann::json& j);

// A stored conversation is {"conversation_id", "source_playlist_id", "turns"};
// a bare turn array is also accepted (ids left empty).
nlohmann::json conversation_to_json(const Conversation& conv);
Conversation conversation_from_json(const nlohmann::json& j);

// Line-delimited conversations. Loading normalizes turn order.
std::vector<Conversation> load_conversations(const std::filesystem::path& path);
void save_conversations(const std::vector<Conversation>& convs,
                        const std::filesystem::path& path);

}  // namespace talkplay::synth
