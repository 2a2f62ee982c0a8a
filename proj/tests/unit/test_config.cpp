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

#include <doctest.h>

#include <cstdlib>

#include "talkplay/common.hpp"
#include "talkplay/config.hpp"

using namespace talkplay;

TEST_CASE("sections, scalars and arrays") {
  auto c = Config::parse(R"(
# comment
top = "x"
[model]
d_model = 128
lr = 1e-3   # trailing comment
greedy = true
name = "a # not a comment"
weights = [25, 16, 9.5, 4, 1]
)");
  CHECK(c.get_string("top", "") == "x");
  CHECK(c.get_int("model.d_model", 0) == 128);
  CHECK(c.get_double("model.lr", 0) == doctest::Approx(1e-3));
  CHECK(c.get_double("model.d_model", 0) == 128.0);
  CHECK(c.get_bool("model.greedy", false));
  CHECK(c.get_string("model.name", "") == "a # not a comment");
  CHECK(c.get_doubles("model.weights", {}) == std::vector<double>{25, 16, 9.5, 4, 1});
  CHECK(c.get_int("model.missing", 7) == 7);
  CHECK_THROWS_AS(c.get_int("model.name", 0), InvalidArgument);
}

TEST_CASE("syntax errors carry the line") {
  CHECK_THROWS_WITH_AS(Config::parse("a = 1\nb = \"open\n", "x.toml"), doctest::Contains("x.toml:2"),
                       ParseError);
  CHECK_THROWS_AS(Config::parse("[unterminated\n"), ParseError);
  CHECK_THROWS_AS(Config::parse("novalue\n"), ParseError);
}

TEST_CASE("environment overrides") {
  auto c = Config::parse("[service]\nport = 8080\nhost = \"127.0.0.1\"\n");
  ::setenv("TPTEST_SERVICE_PORT", "9191", 1);
  ::setenv("TPTEST_SERVICE_HOST", "0.0.0.0", 1);
  c.apply_env_overrides("TPTEST_", {"service.port", "service.host", "service.seed"});
  CHECK(c.get_int("service.port", 0) == 9191);
  CHECK(c.get_string("service.host", "") == "0.0.0.0");
  CHECK_FALSE(c.has("service.seed"));
  ::unsetenv("TPTEST_SERVICE_PORT");
  ::unsetenv("TPTEST_SERVICE_HOST");
}
