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
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace talkplay {

// A flat key/value view of a TOML-subset file. Section headers prefix keys
// ("[train]" + "lr = 1e-3" -> "train.lr"). Supported values: quoted strings,
// integers, floats, booleans and single-line arrays of those.
class Config {
 public:
  using Scalar = std::variant<bool, std::int64_t, double, std::string>;
  struct Value {
    Scalar scalar;
    std::vector<Scalar> array;
    bool is_array = false;
  };

  static Config parse(std::string_view text, std::string_view origin = "<string>");
  static Config load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.contains(key); }

  std::string get_string(const std::string& key, std::string fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key,
                                  std::vector<double> fallback) const;

  // Overwrites `key` from the environment variable PREFIX + KEY, where the key
  // is upper-cased and '.' becomes '_'. Values are parsed as TOML scalars,
  // falling back to a bare string.
  void apply_env_overrides(std::string_view prefix,
                           const std::vector<std::string>& keys);

  void set(const std::string& key, Scalar v) { values_[key] = Value{std::move(v), {}, false}; }

  const std::map<std::string, Value>& values() const { return values_; }

 private:
  const Value* find(const std::string& key) const;
  std::map<std::string, Value> values_;
};

}  // namespace talkplay
