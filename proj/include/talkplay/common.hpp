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

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace talkplay {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class IntegrityError : public Error {
 public:
  using Error::Error;
};

class LoadError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

// The five item signal sources, in the coarse-to-fine order used for
// token sequences. Values are stable: they are written into binary files.
enum class Modality : std::uint8_t {
  kPlaylist = 0,
  kSemantic = 1,
  kMetadata = 2,
  kLyrics = 3,
  kAudio = 4,
};

inline constexpr std::size_t kNumModalities = 5;

inline constexpr std::array<Modality, kNumModalities> kModalityOrder = {
    Modality::kPlaylist, Modality::kSemantic, Modality::kMetadata,
    Modality::kLyrics, Modality::kAudio};

constexpr std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::kPlaylist: return "playlist";
    case Modality::kSemantic: return "semantic";
    case Modality::kMetadata: return "metadata";
    case Modality::kLyrics: return "lyrics";
    case Modality::kAudio: return "audio";
  }
  return "unknown";
}

constexpr std::size_t modality_index(Modality m) {
  return static_cast<std::size_t>(m);
}

inline std::optional<Modality> parse_modality(std::string_view name) {
  for (Modality m : kModalityOrder) {
    if (modality_name(m) == name) return m;
  }
  return std::nullopt;
}

inline Modality modality_from_byte(std::uint8_t b) {
  if (b >= kNumModalities) {
    throw LoadError("invalid modality byte " + std::to_string(b));
  }
  return static_cast<Modality>(b);
}

// splitmix64 finalizer of seed combined with a stream index.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// 64-bit FNV-1a, stable across platforms (unlike std::hash).
constexpr std::uint64_t stable_hash(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace talkplay
