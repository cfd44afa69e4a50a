// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#include <string>

#include "doctest.h"
#include "ietts/config.hpp"

using namespace ietts;

namespace {

std::string error_of(const std::string& text) {
  try {
    config::parse_config(text);
  } catch (const std::invalid_argument& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("defaults") {
  const auto c = config::parse_config("");
  CHECK(c.reward.lambda == 0.5);
  CHECK(c.reward.k == 20);
  CHECK(c.schedule.base_lr == 1e-3);
  CHECK(c.schedule.floor_lr == 1e-5);
  CHECK(c.schedule.batch_size == 32);
  CHECK(c.agent.emotions == static_cast<std::size_t>(c.corpus.emotions));
  CHECK(c.agent.reduction == 2);
  CHECK(c.agent.init_sigma == 0.3);
  CHECK(c.train.regime == train::Regime::kIterative);
  CHECK_FALSE(c.train.use_baseline);
}

TEST_CASE("values, comments and whitespace") {
  const auto c = config::parse_config(
      "# run\n"
      "seed = 42\n"
      "  out=/tmp/x   # trailing comment\n"
      "\n"
      "reward.lambda = 0.25\r\n"
      "train.regime = mse-only\n"
      "train.baseline = true\n"
      "corpus.emotions = 3\n");
  CHECK(c.seed == 42);
  CHECK(c.out == "/tmp/x");
  CHECK(c.reward.lambda == 0.25);
  CHECK(c.train.regime == train::Regime::kMseOnly);
  CHECK(c.train.use_baseline);
  CHECK(c.ser.emotions == 3);
  CHECK(c.agent.emotions == 3);
}

TEST_CASE("serialize and parse round-trip exactly") {
  auto c = config::parse_config("reward.lambda = 0.1\nschedule.base_lr = 0.0003\nseed = 9\n");
  const std::string text = config::serialize_config(c);
  const auto back = config::parse_config(text);
  CHECK(config::serialize_config(back) == text);
  CHECK(back.schedule.base_lr == c.schedule.base_lr);
  // Every known key appears once.
  for (const auto& k : config::known_keys()) {
    const bool found = text.find("\n" + k + " = ") != std::string::npos || text.rfind(k + " = ", 0) == 0;
    CHECK(found);
  }
}

TEST_CASE("errors name the line and the key") {
  auto e = error_of("seed = 1\nbogus.key = 3\n");
  CHECK(e.find("line 2") != std::string::npos);
  CHECK(e.find("bogus.key") != std::string::npos);
  e = error_of("seed = 1\n\nno equals sign\n");
  CHECK(e.find("line 3") != std::string::npos);
  e = error_of("reward.k = many\n");
  CHECK(e.find("reward.k") != std::string::npos);
  CHECK(e.find("line 1") != std::string::npos);
  CHECK_FALSE(error_of("reward.lambda = 1.5\n").empty());
  CHECK_FALSE(error_of("reward.k = 40\n").empty());  // more than the batch
  CHECK_FALSE(error_of("train.regime = rl\n").empty());
  CHECK_FALSE(error_of("ser.kernel = 4\n").empty());
  CHECK_FALSE(error_of("agent.hidden = 5\n").empty());
  CHECK_FALSE(error_of("train.baseline = maybe\n").empty());
  CHECK_THROWS_AS(config::load_config("/nonexistent/ietts.cfg"), std::invalid_argument);
}

TEST_CASE("shipped default config matches the built-in defaults") {
  config::RunConfig builtin = config::parse_config("");
  const config::RunConfig shipped = config::load_config(IETTS_DEFAULT_CONFIG);
  builtin.out = shipped.out;
  CHECK(config::serialize_config(shipped) == config::serialize_config(builtin));
}
