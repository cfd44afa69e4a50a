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

#include "ietts/rl.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ietts::rl {

using ad::Shape;
using ad::Var;

void RewardConfig::validate() const {
  if (!(lambda > 0.0 && lambda < 1.0)) throw std::invalid_argument("reward: lambda must lie in (0, 1)");
  if (k < 1) throw std::invalid_argument("reward: K must be >= 1");
}

RewardBatch compute_reward(std::span<const double> probs, const RewardConfig& cfg) {
  cfg.validate();
  if (probs.size() != cfg.k) {
    throw std::invalid_argument("reward: expected " + std::to_string(cfg.k) + " probabilities, got " +
                                std::to_string(probs.size()));
  }
  RewardBatch out;
  out.probs.assign(probs.begin(), probs.end());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = probs[i];
    if (!(p >= 0.0 && p <= 1.0)) {
      throw std::invalid_argument("reward: probability " + std::to_string(i) + " = " + std::to_string(p) +
                                  " outside [0, 1]");
    }
    if (p > cfg.lambda) ++out.n;
  }
  out.reward = static_cast<double>(out.n) / static_cast<double>(cfg.k);
  return out;
}

Var reinforce_surrogate(std::span<const Var> log_probs, double reward) {
  if (log_probs.empty()) throw std::invalid_argument("surrogate: no samples");
  for (const Var& lp : log_probs) {
    if (!lp.defined() || lp.numel() != 1) throw std::invalid_argument("surrogate: sample without a scalar log_prob");
  }
  std::vector<Var> flat;
  flat.reserve(log_probs.size());
  for (const Var& lp : log_probs) flat.push_back(ad::reshape(lp, Shape{1}));
  return ad::scale(ad::mean(ad::concat(flat, 0)), -reward);
}

Var reinforce_surrogate(std::span<const agent::PolicySample> samples, double reward) {
  std::vector<Var> lps;
  lps.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.mode != agent::DecodeMode::kSampled || !s.log_prob.defined()) {
      throw std::invalid_argument("surrogate: every sample must come from sampled decoding");
    }
    lps.push_back(s.log_prob);
  }
  return reinforce_surrogate(lps, reward);
}

double MovingAverageBaseline::advantage(double reward) {
  const double adv = initialised_ ? reward - value_ : 0.0;
  value_ = initialised_ ? decay_ * value_ + (1.0 - decay_) * reward : reward;
  initialised_ = true;
  return adv;
}

DiscreteToyPolicy::DiscreteToyPolicy(std::size_t length, std::size_t symbols, std::vector<double> logits)
    : length_(length), symbols_(symbols), logits_(std::move(logits)) {
  if (length < 1 || symbols < 2) throw std::invalid_argument("toy policy: need L >= 1 and A >= 2");
  if (length * symbols > 64) throw std::invalid_argument("toy policy: A * L must be <= 64");
  if (logits_.size() != length * symbols) throw std::invalid_argument("toy policy: logits must have L * A entries");
}

DiscreteToyPolicy DiscreteToyPolicy::random(std::size_t length, std::size_t symbols, Rng& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> logits(length * symbols);
  for (double& v : logits) v = n(rng);
  return DiscreteToyPolicy(length, symbols, std::move(logits));
}

namespace {

std::vector<double> position_probs(const std::vector<double>& logits, std::size_t l, std::size_t a) {
  const double* row = logits.data() + l * a;
  double mx = row[0];
  for (std::size_t i = 1; i < a; ++i) mx = std::max(mx, row[i]);
  std::vector<double> p(a);
  double z = 0.0;
  for (std::size_t i = 0; i < a; ++i) z += p[i] = std::exp(row[i] - mx);
  for (double& v : p) v /= z;
  return p;
}

}  // namespace

std::vector<int> DiscreteToyPolicy::sample(Rng& rng) const {
  std::vector<int> seq(length_);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t l = 0; l < length_; ++l) {
    const auto p = position_probs(logits_, l, symbols_);
    double x = u(rng), acc = 0.0;
    seq[l] = static_cast<int>(symbols_ - 1);
    for (std::size_t a = 0; a < symbols_; ++a) {
      acc += p[a];
      if (x < acc) {
        seq[l] = static_cast<int>(a);
        break;
      }
    }
  }
  return seq;
}

double DiscreteToyPolicy::probability(std::span<const int> seq) const {
  double p = 1.0;
  for (std::size_t l = 0; l < length_; ++l) p *= position_probs(logits_, l, symbols_)[static_cast<std::size_t>(seq[l])];
  return p;
}

Var DiscreteToyPolicy::log_prob(const Var& logits_var, std::span<const int> seq) {
  const std::size_t L = logits_var.shape()[0], A = logits_var.shape()[1];
  if (seq.size() != L) throw std::invalid_argument("toy policy: sequence length mismatch");
  std::vector<int> flat(L);
  for (std::size_t l = 0; l < L; ++l) flat[l] = static_cast<int>(l * A) + seq[l];
  const Var table = ad::reshape(ad::log_softmax(logits_var), Shape{L * A, 1});
  return ad::sum(ad::gather_rows(table, flat));
}

namespace {

double expected(const DiscreteToyPolicy& policy, const SequenceReward& reward) {
  const std::size_t L = policy.length(), A = policy.symbols();
  std::vector<int> seq(L, 0);
  double total = 0.0;
  while (true) {
    total += policy.probability(seq) * reward(seq);
    std::size_t l = 0;
    while (l < L && ++seq[l] == static_cast<int>(A)) seq[l++] = 0;
    if (l == L) break;
  }
  return total;
}

}  // namespace

ExactResult exact_expected_reward(const DiscreteToyPolicy& policy, const SequenceReward& reward, double h) {
  double outcomes = std::pow(static_cast<double>(policy.symbols()), static_cast<double>(policy.length()));
  if (outcomes > static_cast<double>(kMaxOutcomes)) {
    throw std::invalid_argument("exact_expected_reward: " + std::to_string(static_cast<long long>(outcomes)) +
                                " outcomes exceed the enumeration limit");
  }
  ExactResult res;
  res.value = expected(policy, reward);
  DiscreteToyPolicy probe = policy;
  res.gradient.resize(policy.logits().size());
  for (std::size_t i = 0; i < res.gradient.size(); ++i) {
    const double x0 = probe.logits()[i];
    probe.logits()[i] = x0 + h;
    const double up = expected(probe, reward);
    probe.logits()[i] = x0 - h;
    const double down = expected(probe, reward);
    probe.logits()[i] = x0;
    res.gradient[i] = (up - down) / (2.0 * h);
  }
  return res;
}

bool BiasReport::within(double sigmas) const { return max_abs_z <= sigmas; }

BiasReport estimator_bias_test(const DiscreteToyPolicy& policy, const SequenceReward& reward, std::size_t n_samples,
                               Rng& rng) {
  if (n_samples < 2) throw std::invalid_argument("estimator_bias_test: need at least 2 samples");
  const std::size_t P = policy.logits().size();
  const Var logits = ad::parameter(Shape{policy.length(), policy.symbols()}, policy.logits());
  std::vector<double> sum(P, 0.0), sum_sq(P, 0.0);
  for (std::size_t s = 0; s < n_samples; ++s) {
    const auto seq = policy.sample(rng);
    logits.node().grad.assign(P, 0.0);
    const Var lp = DiscreteToyPolicy::log_prob(logits, seq);
    // The surrogate's gradient is -r grad log P; negate to get the ascent
    // direction r grad log P.
    ad::backward(reinforce_surrogate(std::span<const Var>(&lp, 1), reward(seq)));
    for (std::size_t i = 0; i < P; ++i) {
      const double g = -logits.grad()[i];
      sum[i] += g;
      sum_sq[i] += g * g;
    }
  }
  BiasReport rep;
  rep.exact = exact_expected_reward(policy, reward).gradient;
  const double n = static_cast<double>(n_samples);
  for (std::size_t i = 0; i < P; ++i) {
    const double mean = sum[i] / n;
    const double var = std::max(0.0, (sum_sq[i] - n * mean * mean) / (n - 1.0));
    const double se = std::sqrt(var / n);
    const double dev = mean - rep.exact[i];
    const double z = se > 0.0 ? dev / se : (std::abs(dev) < 1e-12 ? 0.0 : INFINITY);
    rep.estimate.push_back(mean);
    rep.standard_error.push_back(se);
    rep.z.push_back(z);
    rep.max_abs_z = std::max(rep.max_abs_z, std::abs(z));
  }
  return rep;
}

}  // namespace ietts::rl
