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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <random>
#include <string>

#include "talkplay/catalog.hpp"

namespace talkplay::testing {

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("talkplay-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline catalog::Track make_track(std::string id, std::string title, std::string artist,
                                 double popularity = 50.0) {
  catalog::Track t;
  t.track_id = std::move(id);
  t.title = std::move(title);
  t.artist = std::move(artist);
  t.popularity = popularity;
  return t;
}

inline std::filesystem::path data_dir() { return TALKPLAY_TEST_DATA_DIR; }

// Contents of a golden file under data_dir(). With TALKPLAY_UPDATE_GOLDEN=1
// in the environment, `actual` is written first so the comparison passes.
inline std::string golden(const std::string& name, const std::string& actual) {
  const auto path = data_dir() / name;
  if (const char* u = std::getenv("TALKPLAY_UPDATE_GOLDEN"); u && std::string(u) == "1") {
    std::ofstream(path, std::ios::binary) << actual;
  }
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace talkplay::testing
