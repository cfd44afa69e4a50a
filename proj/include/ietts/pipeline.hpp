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

// File-level stages behind the command line tool. Every stage reads its
// inputs from and writes its outputs to the configured output directory:
//
//   corpus.txt               gen-data
//   ser.ckpt                 pretrain-ser
//   pretrained.ckpt          pretrain-agent
//   <regime>.ckpt            train (rewritten after every epoch)
//   <regime>_metrics.jsonl   train
//   <regime>_report.json     eval (plus <regime>_confusion.csv)
//   synth.txt                synth (corpus format, one record)
//   <command>.cfg            resolved configuration of the last run

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ietts/config.hpp"
#include "ietts/eval.hpp"
#include "ietts/trainer.hpp"

namespace ietts::pipeline {

struct Layout {
  std::filesystem::path dir;

  std::filesystem::path corpus() const { return dir / "corpus.txt"; }
  std::filesystem::path ser() const { return dir / "ser.ckpt"; }
  std::filesystem::path pretrained() const { return dir / "pretrained.ckpt"; }
  std::filesystem::path regime_checkpoint(train::Regime r) const;
  std::filesystem::path metrics(train::Regime r) const;
  std::filesystem::path report(train::Regime r) const;
  std::filesystem::path confusion_csv(train::Regime r) const;
  std::filesystem::path synth() const { return dir / "synth.txt"; }
  std::filesystem::path snapshot(const std::string& command) const { return dir / (command + ".cfg"); }
};

void write_snapshot(const config::RunConfig& cfg, const std::string& command);

corpus::Corpus gen_data(const config::RunConfig& cfg);
// Writes ser.ckpt, or `out` when given (e.g. a second, independently seeded
// classifier for evaluation).
ser::SerPretrainResult pretrain_ser(const config::RunConfig& cfg,
                                    const std::optional<std::filesystem::path>& out = std::nullopt);
train::PretrainResult pretrain_agent(const config::RunConfig& cfg);

struct TrainOutcome {
  std::vector<train::EpochMetrics> metrics;
  std::uint64_t rl_updates = 0;
  std::uint64_t mse_updates = 0;
  std::uint64_t batches = 0;
  std::uint64_t ser_checksum_before = 0;
  std::uint64_t ser_checksum_after = 0;
};
// Starts from pretrained.ckpt, or resumes from `resume` (a checkpoint
// written by an earlier train run with the same configuration).
TrainOutcome train(const config::RunConfig& cfg, const std::optional<std::filesystem::path>& resume = std::nullopt);

// Evaluates the agent in `agent_ckpt` (default: the regime checkpoint) with
// the reward classifier, or with the classifier in `ser_ckpt` when given.
eval::Report evaluate(const config::RunConfig& cfg, const std::optional<std::filesystem::path>& agent_ckpt,
                      const std::optional<std::filesystem::path>& ser_ckpt = std::nullopt);

// Loads reports and writes comparison.json in the output directory.
eval::RegimeComparison compare(const config::RunConfig& cfg, const std::vector<std::filesystem::path>& baseline,
                               const std::vector<std::filesystem::path>& candidate);

// Synthesizes `text` with the test-set token profile row of `emotion` and
// writes it as a one-record corpus file.
corpus::FeatureSequence synthesize(const config::RunConfig& cfg, const std::optional<std::filesystem::path>& agent_ckpt,
                                   int emotion, const std::vector<int>& text);

// Parses "3,1,4"; throws std::invalid_argument.
std::vector<int> parse_text(std::string_view s);

}  // namespace ietts::pipeline
