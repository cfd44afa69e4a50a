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

// Classifier reward and the score-function (REINFORCE) surrogate, plus an
// enumerable toy policy used to check the estimator against exact gradients.

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "ietts/agent.hpp"
#include "ietts/autodiff.hpp"
#include "ietts/rng.hpp"

namespace ietts::rl {

struct RewardConfig {
  double lambda = 0.5;
  std::size_t k = 20;

  // Throws std::invalid_argument unless 0 < lambda < 1 and k >= 1.
  void validate() const;
};

struct RewardBatch {
  std::vector<double> probs;
  std::size_t n = 0;  // count of probs strictly above lambda
  double reward = 0.0;
};

// R = |{i : p_i > lambda}| / K. Throws std::invalid_argument if a p_i is
// outside [0, 1] (or NaN) or probs.size() != cfg.k.
RewardBatch compute_reward(std::span<const double> probs, const RewardConfig& cfg);

// -R * mean_i log_prob_i. R enters as a plain number, so the only path to the
// agent parameters is through the log-probabilities. Throws
// std::invalid_argument on an empty list or a sample without log_prob.
ad::Var reinforce_surrogate(std::span<const agent::PolicySample> samples, double reward);
ad::Var reinforce_surrogate(std::span<const ad::Var> log_probs, double reward);

// Optional variance reduction: R - b with b an exponential moving average of
// past rewards. Off by default.
class MovingAverageBaseline {
 public:
  explicit MovingAverageBaseline(double decay = 0.9) : decay_(decay) {}
  // Returns the advantage for `reward` and then folds it into the average.
  double advantage(double reward);
  double value() const { return value_; }
  bool initialised() const { return initialised_; }
  void restore(double value, bool initialised) {
    value_ = value;
    initialised_ = initialised;
  }

 private:
  double decay_;
  double value_ = 0.0;
  bool initialised_ = false;
};

// L independent categorical positions over A symbols, logits[l * A + a].
class DiscreteToyPolicy {
 public:
  DiscreteToyPolicy(std::size_t length, std::size_t symbols, std::vector<double> logits);
  static DiscreteToyPolicy random(std::size_t length, std::size_t symbols, Rng& rng, double scale = 1.0);

  std::size_t length() const { return length_; }
  std::size_t symbols() const { return symbols_; }
  const std::vector<double>& logits() const { return logits_; }
  std::vector<double>& logits() { return logits_; }

  std::vector<int> sample(Rng& rng) const;
  double probability(std::span<const int> seq) const;
  // log P(seq) as a graph over `logits_var` ([L x A]).
  static ad::Var log_prob(const ad::Var& logits_var, std::span<const int> seq);

 private:
  std::size_t length_;
  std::size_t symbols_;
  std::vector<double> logits_;
};

using SequenceReward = std::function<double(std::span<const int>)>;

struct ExactResult {
  double value = 0.0;
  std::vector<double> gradient;  // d value / d logits
};

inline constexpr std::size_t kMaxOutcomes = 4096;

// Enumerates all A^L outcomes; the gradient uses central differences with
// step h. Throws std::invalid_argument if A^L > kMaxOutcomes.
ExactResult exact_expected_reward(const DiscreteToyPolicy& policy, const SequenceReward& reward, double h = 1e-6);

struct BiasReport {
  std::vector<double> estimate;        // mean of single-sample estimates
  std::vector<double> exact;
  std::vector<double> standard_error;  // per coordinate
  std::vector<double> z;               // (estimate - exact) / standard_error
  double max_abs_z = 0.0;
  bool within(double sigmas) const;
};

// Averages n_samples single-sample estimates r(seq) * grad log P(seq), each
// built through reinforce_surrogate on the autodiff graph.
BiasReport estimator_bias_test(const DiscreteToyPolicy& policy, const SequenceReward& reward, std::size_t n_samples,
                               Rng& rng);

}  // namespace ietts::rl
