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

#include "talkplay/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "talkplay/common.hpp"

namespace talkplay {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Strips a trailing '#' comment that is not inside a string.
std::string_view strip_comment(std::string_view s) {
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c == '\\' && in_str) {
      ++i;
    } else if (c == '"') {
      in_str = !in_str;
    } else if (c == '#' && !in_str) {
      return s.substr(0, i);
    }
  }
  return s;
}

struct Cursor {
  std::string_view s;
  std::size_t pos = 0;
  std::string where;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(where + ": " + msg);
  }
  void skip_ws() {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  }
  bool done() const { return pos >= s.size(); }
};

Config::Scalar parse_scalar(Cursor& c) {
  c.skip_ws();
  if (c.done()) c.fail("missing value");
  if (c.s[c.pos] == '"') {
    std::string out;
    ++c.pos;
    while (true) {
      if (c.done()) c.fail("unterminated string");
      char ch = c.s[c.pos++];
      if (ch == '"') break;
      if (ch == '\\') {
        if (c.done()) c.fail("bad escape");
        char e = c.s[c.pos++];
        switch (e) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          default: c.fail(std::string("unsupported escape \\") + e);
        }
      } else {
        out += ch;
      }
    }
    return out;
  }
  std::size_t start = c.pos;
  while (!c.done() && c.s[c.pos] != ',' && c.s[c.pos] != ']' &&
         !std::isspace(static_cast<unsigned char>(c.s[c.pos]))) {
    ++c.pos;
  }
  std::string tok(c.s.substr(start, c.pos - start));
  if (tok == "true") return true;
  if (tok == "false") return false;
  if (tok.empty()) c.fail("missing value");
  char* end = nullptr;
  bool looks_float = tok.find_first_of(".eE") != std::string::npos ||
                     tok == "inf" || tok == "nan";
  if (!looks_float) {
    long long v = std::strtoll(tok.c_str(), &end, 10);
    if (end && *end == '\0') return static_cast<std::int64_t>(v);
  }
  double d = std::strtod(tok.c_str(), &end);
  if (end && *end == '\0') return d;
  c.fail("cannot parse value '" + tok + "'");
}

std::string scalar_to_string(const Config::Scalar& s) {
  if (auto p = std::get_if<std::string>(&s)) return *p;
  if (auto p = std::get_if<bool>(&s)) return *p ? "true" : "false";
  if (auto p = std::get_if<std::int64_t>(&s)) return std::to_string(*p);
  std::ostringstream os;
  os << std::get<double>(s);
  return os.str();
}

}  // namespace

Config Config::parse(std::string_view text, std::string_view origin) {
  Config cfg;
  std::string section;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    std::string_view raw = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    std::string where = std::string(origin) + ":" + std::to_string(line_no);
    std::string_view line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(where + ": bad section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(where + ": expected key = value");
    std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ParseError(where + ": empty key");
    if (!section.empty()) key = section + "." + key;
    Cursor c{trim(line.substr(eq + 1)), 0, where};
    Value v;
    if (!c.s.empty() && c.s.front() == '[') {
      v.is_array = true;
      ++c.pos;
      c.skip_ws();
      if (!c.done() && c.s[c.pos] == ']') {
        ++c.pos;
      } else {
        while (true) {
          v.array.push_back(parse_scalar(c));
          c.skip_ws();
          if (c.done()) c.fail("unterminated array");
          if (c.s[c.pos] == ',') {
            ++c.pos;
            continue;
          }
          if (c.s[c.pos] == ']') {
            ++c.pos;
            break;
          }
          c.fail("expected ',' or ']'");
        }
      }
    } else {
      v.scalar = parse_scalar(c);
    }
    c.skip_ws();
    if (!c.done()) c.fail("trailing characters");
    cfg.values_[key] = std::move(v);
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

const Config::Value* Config::find(const std::string& key) const {
  auto it = values_.find(key);
  return it == values_.end() ? nullptr : &it->second;
}

std::string Config::get_string(const std::string& key, std::string fallback) const {
  const Value* v = find(key);
  if (!v) return fallback;
  if (v->is_array) throw InvalidArgument("config key " + key + " is an array");
  return scalar_to_string(v->scalar);
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
  const Value* v = find(key);
  if (!v) return fallback;
  if (auto p = std::get_if<std::int64_t>(&v->scalar); p && !v->is_array) return *p;
  throw InvalidArgument("config key " + key + " must be an integer");
}

double Config::get_double(const std::string& key, double fallback) const {
  const Value* v = find(key);
  if (!v) return fallback;
  if (v->is_array) throw InvalidArgument("config key " + key + " is an array");
  if (auto p = std::get_if<double>(&v->scalar)) return *p;
  if (auto p = std::get_if<std::int64_t>(&v->scalar)) return static_cast<double>(*p);
  throw InvalidArgument("config key " + key + " must be a number");
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const Value* v = find(key);
  if (!v) return fallback;
  if (auto p = std::get_if<bool>(&v->scalar); p && !v->is_array) return *p;
  throw InvalidArgument("config key " + key + " must be a boolean");
}

std::vector<double> Config::get_doubles(const std::string& key,
                                        std::vector<double> fallback) const {
  const Value* v = find(key);
  if (!v) return fallback;
  if (!v->is_array) throw InvalidArgument("config key " + key + " must be an array");
  std::vector<double> out;
  for (const auto& s : v->array) {
    if (auto p = std::get_if<double>(&s)) {
      out.push_back(*p);
    } else if (auto q = std::get_if<std::int64_t>(&s)) {
      out.push_back(static_cast<double>(*q));
    } else {
      throw InvalidArgument("config key " + key + " must hold numbers");
    }
  }
  return out;
}

void Config::apply_env_overrides(std::string_view prefix,
                                 const std::vector<std::string>& keys) {
  for (const auto& key : keys) {
    std::string env(prefix);
    for (char ch : key) {
      env += ch == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    }
    const char* raw = std::getenv(env.c_str());
    if (!raw) continue;
    std::string text = raw;
    try {
      Cursor c{text, 0, env};
      Scalar s = parse_scalar(c);
      c.skip_ws();
      if (!c.done()) throw ParseError("trailing");
      set(key, std::move(s));
    } catch (const ParseError&) {
      set(key, text);
    }
  }
}

}  // namespace talkplay
