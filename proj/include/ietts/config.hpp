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

// Run configuration: flat "key = value" text with dotted section prefixes,
// e.g. "reward.lambda = 0.5". '#' starts a comment. Unknown keys are errors.
//
// `seed` drives agent initialisation, batching and policy sampling;
// corpus.seed and ser.seed are separate so that several agent seeds can share
// one corpus and one classifier.

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ietts/agent.hpp"
#include "ietts/corpus.hpp"
#include "ietts/optim.hpp"
#include "ietts/rl.hpp"
#include "ietts/ser.hpp"
#include "ietts/trainer.hpp"

namespace ietts::config {

struct RunConfig {
  std::uint64_t seed = 1;
  std::string out = "out";
  corpus::CorpusSpec corpus;
  ser::SerHyper ser;
  ser::SerTrainConfig ser_train;
  std::uint64_t ser_seed = 1;
  agent::AgentHyper agent;
  rl::RewardConfig reward;
  optim::Schedule schedule;
  train::IterativeConfig train;  // schedule and reward are copied in by iterative_config()

  // Copies corpus sizes into the model hypers and runs every validator.
  // Throws std::invalid_argument.
  void finalize();
  train::IterativeConfig iterative_config() const;
};

// Applies one key; throws std::invalid_argument naming the key.
void set_value(RunConfig& cfg, std::string_view key, std::string_view value);
std::vector<std::string> known_keys();

// Throws std::invalid_argument naming the line on a syntax error or unknown
// key. The result is finalized.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

// Every key with its resolved value, one per line, in a fixed order;
// parse_config(serialize_config(c)) reproduces c exactly.
std::string serialize_config(const RunConfig& cfg);

}  // namespace ietts::config
