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

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>

#include "talkplay/common.hpp"

// Little-endian primitive serialization shared by the embedding, codebook,
// index and checkpoint containers.
namespace talkplay::binio {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  template <typename T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }

  void magic(std::string_view tag) { out_.write(tag.data(), tag.size()); }

  // u16 length prefix, then raw bytes.
  void str16(std::string_view s) {
    if (s.size() > 0xFFFF) throw InvalidArgument("string too long for u16 prefix");
    put<std::uint16_t>(static_cast<std::uint16_t>(s.size()));
    out_.write(s.data(), s.size());
  }

  template <typename T>
  void array(std::span<const T> values) {
    out_.write(reinterpret_cast<const char*>(values.data()),
               static_cast<std::streamsize>(values.size_bytes()));
  }

  void check() const {
    if (!out_) throw Error("write failed");
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string what) : in_(in), what_(std::move(what)) {}

  template <typename T>
    requires std::is_arithmetic_v<T>
  T get() {
    T value{};
    read_raw(&value, sizeof(T));
    return value;
  }

  void expect_magic(std::string_view tag) {
    std::string buf(tag.size(), '\0');
    read_raw(buf.data(), buf.size());
    if (buf != tag) {
      throw LoadError(what_ + ": bad magic, expected " + std::string(tag));
    }
  }

  std::string str16() {
    auto n = get<std::uint16_t>();
    std::string s(n, '\0');
    read_raw(s.data(), n);
    return s;
  }

  template <typename T>
  void array(std::span<T> out) {
    read_raw(out.data(), out.size_bytes());
  }

  // True when the stream has no bytes left.
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

  const std::string& what() const { return what_; }

 private:
  void read_raw(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw LoadError(what_ + ": truncated file");
    }
  }

  std::istream& in_;
  std::string what_;
};

}  // namespace talkplay::binio
