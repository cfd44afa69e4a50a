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

// Agent training: teacher-forced MSE pretraining, then the iterative loop
// that alternates one reward-driven update and one MSE update per batch.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ietts/agent.hpp"
#include "ietts/checkpoint.hpp"
#include "ietts/corpus.hpp"
#include "ietts/optim.hpp"
#include "ietts/rl.hpp"
#include "ietts/ser.hpp"

namespace ietts::train {

enum class Regime { kMseOnly, kIterative };
std::string_view regime_name(Regime r);
// Accepts "mse-only" and "iterative"; throws std::invalid_argument.
Regime parse_regime(std::string_view name);

struct PretrainResult {
  std::size_t steps_run = 0;
  std::vector<double> loss_curve;  // mean batch loss per log interval
  double initial_val_loss = 0.0;
  double final_val_loss = 0.0;
};

// Mean teacher-forced loss (mse + stop) over a list, graph-free.
double mean_mse_loss(const agent::Agent& agent, const std::vector<corpus::Utterance>& items);

// Teacher-forced training with each utterance as its own reference. The
// learning rate follows lr_at(step) and batches come from a per-epoch
// shuffle derived from `seed`, so the result is a pure function of the
// inputs. Throws NumericError with the step index on a non-finite loss.
PretrainResult pretrain_agent(agent::Agent& agent, optim::Adam& adam, const corpus::Corpus& corpus,
                              const optim::Schedule& schedule, std::uint64_t seed, std::size_t log_every = 100);

struct IterativeConfig {
  Regime regime = Regime::kIterative;
  rl::RewardConfig reward;
  optim::Schedule schedule;
  // Index the learning rate from the start of this phase rather than
  // continuing after pretraining.
  bool restart_schedule = true;
  // Stop once the validation accuracy spread over the last window + 1
  // epochs is below tolerance (fraction, 0.001 = 0.1 points).
  std::size_t convergence_window = 3;
  double convergence_tolerance = 0.001;
  std::size_t min_epochs = 10;
  bool use_baseline = false;
  double baseline_decay = 0.9;

  // Throws std::invalid_argument (K > batch size among others).
  void validate() const;
};

struct EpochMetrics {
  std::uint64_t step = 0;  // batches completed in this phase
  std::uint64_t epoch = 0; // 1-based
  double reward = 0.0;     // mean R over the epoch's RL updates (0 for mse-only)
  double mse = 0.0;        // mean batch MSE term over the epoch
  double val_ser_acc = 0.0;
  double lr = 0.0;

  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};
std::string metrics_json(const EpochMetrics& m);

// Classifier accuracy on reference-conditioned mean decodes of `items`.
double synthesized_ser_accuracy(const agent::Agent& agent, const ser::SerModel& ser,
                                const std::vector<corpus::Utterance>& items);

class IterativeTrainer {
 public:
  // `ser` must outlive the trainer and is never modified. The agent and
  // optimizer are copied in; `adam` carries on from pretraining and serves the
  // MSE updates. Policy-gradient updates get their own fresh moments so their
  // much larger variance does not shrink the MSE steps.
  IterativeTrainer(agent::Agent agent, optim::Adam adam, const ser::SerModel& ser, const corpus::Corpus& corpus,
                   IterativeConfig cfg, std::uint64_t seed, std::uint64_t pretrain_steps);

  // Runs one batch (and the epoch bookkeeping after it). Returns false once
  // training has finished; further calls do nothing.
  bool step();
  // Runs until finished or `max_batches` more batches have run.
  void run(std::uint64_t max_batches = UINT64_MAX);

  bool finished() const { return finished_; }
  const agent::Agent& agent() const { return agent_; }
  const optim::Adam& optimizer() const { return adam_; }
  const optim::Adam& rl_optimizer() const { return rl_adam_; }
  const std::vector<EpochMetrics>& metrics() const { return metrics_; }
  std::uint64_t rl_updates() const { return rl_updates_; }
  std::uint64_t mse_updates() const { return mse_updates_; }
  std::uint64_t batches() const { return batches_; }
  std::size_t batches_per_epoch() const { return batches_per_epoch_; }
  double current_lr() const;

  // Called with each epoch's metrics once the epoch, including the stop
  // decision, is complete.
  std::function<void(const EpochMetrics&)> on_epoch;
  // When set, a checkpoint is written here before a NumericError propagates.
  std::optional<std::filesystem::path> divergence_checkpoint;

  ckpt::Checkpoint checkpoint() const;
  // Restores trainer state saved by checkpoint(). Throws FormatError if the
  // corpus, classifier, configuration or model layout differ.
  void restore(const ckpt::Checkpoint& c);

 private:
  agent::Agent agent_;
  optim::Adam adam_;
  optim::Adam rl_adam_;
  const ser::SerModel* ser_;
  const corpus::Corpus* corpus_;
  IterativeConfig cfg_;
  std::uint64_t seed_;
  std::uint64_t pretrain_steps_;
  std::size_t batches_per_epoch_;
  Rng rng_;
  rl::MovingAverageBaseline baseline_;

  std::uint64_t batches_ = 0;
  std::uint64_t rl_updates_ = 0;
  std::uint64_t mse_updates_ = 0;
  double epoch_reward_ = 0.0;
  double epoch_mse_ = 0.0;
  bool finished_ = false;
  std::vector<EpochMetrics> metrics_;

  std::vector<std::size_t> epoch_order(std::uint64_t epoch) const;
  std::uint64_t config_hash() const;
  void rl_update(const std::vector<std::size_t>& batch, double lr);
  void mse_update(const std::vector<std::size_t>& batch, double lr);
  void end_epoch(double lr);
};

// Agent-only checkpoint (after pretraining): theta, optimizer, hypers.
ckpt::Checkpoint agent_checkpoint(const agent::Agent& agent, const optim::Adam& adam, std::uint64_t pretrain_steps,
                                  std::uint64_t corpus_hash);
struct LoadedAgent {
  agent::Agent agent;
  optim::Adam adam;
  std::uint64_t pretrain_steps = 0;
  std::uint64_t corpus_hash = 0;
};
LoadedAgent load_agent(const ckpt::Checkpoint& c);

ckpt::Checkpoint ser_checkpoint(const ser::SerModel& model, std::uint64_t corpus_hash);
ser::SerModel load_ser(const ckpt::Checkpoint& c);

void put_agent_hyper(ckpt::Checkpoint& c, const agent::AgentHyper& h);
agent::AgentHyper get_agent_hyper(const ckpt::Checkpoint& c);
void put_ser_hyper(ckpt::Checkpoint& c, const ser::SerHyper& h);
ser::SerHyper get_ser_hyper(const ckpt::Checkpoint& c);

}  // namespace ietts::train
