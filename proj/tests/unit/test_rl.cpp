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

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "ietts/rl.hpp"

using namespace ietts;
using ad::Shape;
using ad::Var;
using rl::RewardConfig;

namespace {

RewardConfig cfg_k(std::size_t k, double lambda = 0.5) {
  RewardConfig c;
  c.k = k;
  c.lambda = lambda;
  return c;
}

}  // namespace

TEST_CASE("reward examples") {
  const std::vector<double> all{0.9, 0.8, 0.7, 0.6};
  CHECK(rl::compute_reward(all, cfg_k(4)).reward == 1.0);
  const std::vector<double> half{0.6, 0.4};
  const auto r = rl::compute_reward(half, cfg_k(2));
  CHECK(r.reward == 0.5);
  CHECK(r.n == 1);
  CHECK(r.probs == half);
  // A probability exactly at the threshold does not count.
  const std::vector<double> tie{0.5, 0.5, 0.51};
  CHECK(rl::compute_reward(tie, cfg_k(3)).n == 1);
  const std::vector<double> tie2{0.3, 0.3};
  CHECK(rl::compute_reward(tie2, cfg_k(2, 0.3)).reward == 0.0);
  const std::vector<double> none{0.0, 0.1};
  CHECK(rl::compute_reward(none, cfg_k(2)).reward == 0.0);
}

TEST_CASE("reward input validation") {
  CHECK_THROWS_AS(rl::compute_reward(std::vector<double>{0.2, 1.2}, cfg_k(2)), std::invalid_argument);
  CHECK_THROWS_AS(rl::compute_reward(std::vector<double>{-0.1, 0.2}, cfg_k(2)), std::invalid_argument);
  CHECK_THROWS_AS(rl::compute_reward(std::vector<double>{std::nan(""), 0.2}, cfg_k(2)), std::invalid_argument);
  CHECK_THROWS_AS(rl::compute_reward(std::vector<double>{0.2, 0.3, 0.4}, cfg_k(2)), std::invalid_argument);
  CHECK_THROWS_AS(cfg_k(2, 0.0).validate(), std::invalid_argument);
  CHECK_THROWS_AS(cfg_k(2, 1.0).validate(), std::invalid_argument);
  CHECK_THROWS_AS(cfg_k(0).validate(), std::invalid_argument);
  const RewardConfig d;
  CHECK(d.k == 20);
  CHECK(d.lambda == 0.5);
}

TEST_CASE("reward equals a brute-force recount and ignores order") {
  Rng rng = make_rng(1, "rl.brute");
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 1 + rng() % 40;
    const double lambda = testing::uniform(rng, 1, 0.05, 0.95)[0];
    auto p = testing::uniform(rng, k, 0.0, 1.0);
    // Plant exact ties now and then.
    if (trial % 7 == 0) p[0] = lambda;
    const auto c = cfg_k(k, lambda);
    const auto r = rl::compute_reward(p, c);
    std::size_t count = 0;
    for (double v : p) count += v > lambda ? 1 : 0;
    CHECK(r.n == count);
    CHECK(r.reward == static_cast<double>(count) / static_cast<double>(k));
    CHECK((r.reward >= 0.0 && r.reward <= 1.0));
    std::shuffle(p.begin(), p.end(), rng);
    CHECK(rl::compute_reward(p, c).reward == r.reward);
  }
}

TEST_CASE("surrogate gradient is the reward times the mean log-probability gradient") {
  Rng rng = make_rng(2, "rl.linear");
  for (int trial = 0; trial < 20; ++trial) {
    const Var theta = ad::parameter(Shape{6}, testing::uniform(rng, 6));
    const std::size_t k = 1 + static_cast<std::size_t>(trial % 5);
    const double reward = testing::uniform(rng, 1, 0.0, 1.0)[0];
    auto make_lps = [&] {
      std::vector<Var> lps;
      for (std::size_t i = 0; i < k; ++i) {
        lps.push_back(ad::sum(ad::tanh(ad::scale(theta, static_cast<double>(i + 1))) * theta));
      }
      return lps;
    };
    theta.node().grad.assign(6, 0.0);
    ad::backward(rl::reinforce_surrogate(make_lps(), reward));
    const std::vector<double> g(theta.grad().begin(), theta.grad().end());

    theta.node().grad.assign(6, 0.0);
    const auto lps = make_lps();
    Var mean = lps[0];
    for (std::size_t i = 1; i < k; ++i) mean = mean + lps[i];
    ad::backward(ad::scale(mean, 1.0 / static_cast<double>(k)));
    for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(g[i] + reward * theta.grad()[i]) <= 1e-12);
  }
}

TEST_CASE("surrogate edge cases") {
  const Var theta = ad::parameter(Shape{3}, {0.1, -0.2, 0.3});
  const Var lp = ad::sum(ad::square(theta));
  theta.node().grad.assign(3, 0.0);
  ad::backward(rl::reinforce_surrogate(std::span<const Var>(&lp, 1), 0.0));
  for (double g : theta.grad()) CHECK(g == 0.0);

  // K = 1: exactly -R grad log P.
  const Var lp1 = ad::sum(ad::square(theta));
  theta.node().grad.assign(3, 0.0);
  ad::backward(rl::reinforce_surrogate(std::span<const Var>(&lp1, 1), 0.75));
  for (std::size_t i = 0; i < 3; ++i) CHECK(theta.grad()[i] == -0.75 * 2.0 * theta[i]);

  CHECK_THROWS_AS(rl::reinforce_surrogate(std::vector<Var>{}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(rl::reinforce_surrogate(std::vector<Var>{Var()}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(rl::reinforce_surrogate(std::vector<Var>{theta}, 1.0), std::invalid_argument);

  agent::PolicySample mean_sample;
  mean_sample.mode = agent::DecodeMode::kMean;
  CHECK_THROWS_AS(rl::reinforce_surrogate(std::vector<agent::PolicySample>{mean_sample}, 1.0), std::invalid_argument);
}

TEST_CASE("reward enters the surrogate as a constant") {
  // A reward computed from a differentiable "classifier" output must not
  // route gradient back into the classifier.
  const Var phi = ad::parameter(Shape{1}, {0.3});
  const Var theta = ad::parameter(Shape{1}, {0.7});
  const Var p = ad::sigmoid(phi);
  const double r = rl::compute_reward(p.data(), cfg_k(1)).reward;
  const Var lp = ad::square(theta);
  phi.node().grad.assign(1, 0.0);
  theta.node().grad.assign(1, 0.0);
  ad::backward(ad::sum(rl::reinforce_surrogate(std::span<const Var>(&lp, 1), r)));
  CHECK(phi.grad()[0] == 0.0);
  CHECK(theta.grad()[0] == -r * 1.4);
}

TEST_CASE("moving-average baseline") {
  rl::MovingAverageBaseline b(0.5);
  CHECK(b.advantage(1.0) == 0.0);
  CHECK(b.value() == 1.0);
  CHECK(b.advantage(0.0) == -1.0);
  CHECK(b.value() == 0.5);
  CHECK(b.advantage(0.5) == 0.0);
}

TEST_CASE("toy policy basics") {
  Rng rng = make_rng(3, "rl.toy");
  const auto pol = rl::DiscreteToyPolicy::random(2, 3, rng);
  double total = 0.0;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) total += pol.probability(std::vector<int>{a, b});
  CHECK(std::abs(total - 1.0) <= 1e-12);
  const Var logits = ad::constant(Shape{2, 3}, pol.logits());
  const std::vector<int> seq{2, 0};
  CHECK(std::abs(rl::DiscreteToyPolicy::log_prob(logits, seq).item() - std::log(pol.probability(seq))) <= 1e-12);
  CHECK_THROWS_AS(rl::DiscreteToyPolicy(9, 8, std::vector<double>(72)), std::invalid_argument);
  CHECK_THROWS_AS(rl::DiscreteToyPolicy(2, 3, std::vector<double>(5)), std::invalid_argument);
}

TEST_CASE("exact expected reward examples") {
  const rl::DiscreteToyPolicy uni(1, 2, {0.0, 0.0});
  const auto first = [](std::span<const int> s) { return s[0] == 0 ? 1.0 : 0.0; };
  const auto res = rl::exact_expected_reward(uni, first);
  CHECK(res.value == doctest::Approx(0.5).epsilon(1e-15));
  // d/dz0 of sigmoid(z0 - z1) at 0 is 1/4.
  CHECK(std::abs(res.gradient[0] - 0.25) <= 1e-8);
  CHECK(std::abs(res.gradient[1] + 0.25) <= 1e-8);

  Rng rng = make_rng(4, "rl.const");
  const auto pol = rl::DiscreteToyPolicy::random(3, 4, rng);
  const auto c = rl::exact_expected_reward(pol, [](std::span<const int>) { return 2.5; });
  CHECK(c.value == doctest::Approx(2.5));
  for (double g : c.gradient) CHECK(std::abs(g) <= 1e-8);

  const auto big = rl::DiscreteToyPolicy(13, 2, std::vector<double>(26, 0.0));
  CHECK_THROWS_AS(rl::exact_expected_reward(big, first), std::invalid_argument);
}

TEST_CASE("exact expected reward agrees with Monte Carlo") {
  Rng rng = make_rng(5, "rl.mc");
  const auto pol = rl::DiscreteToyPolicy::random(2, 3, rng);
  const auto table = testing::uniform(rng, 9, 0.0, 1.0);
  const auto reward = [&](std::span<const int> s) { return table[static_cast<std::size_t>(s[0] * 3 + s[1])]; };
  const double exact = rl::exact_expected_reward(pol, reward).value;
  const std::size_t n = 1000000;
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = reward(pol.sample(rng));
    sum += r;
    sum_sq += r * r;
  }
  const double mean = sum / static_cast<double>(n);
  const double se = std::sqrt((sum_sq / static_cast<double>(n) - mean * mean) / static_cast<double>(n));
  CHECK(std::abs(mean - exact) <= 3.0 * se);
}

TEST_CASE("estimator bias test") {
  Rng rng = make_rng(6, "rl.bias");
  const auto pol = rl::DiscreteToyPolicy::random(2, 3, rng);
  const auto table = testing::uniform(rng, 9, 0.0, 1.0);
  const auto reward = [&](std::span<const int> s) { return table[static_cast<std::size_t>(s[0] * 3 + s[1])]; };
  Rng s1 = make_rng(6, "rl.bias.big");
  const auto big = rl::estimator_bias_test(pol, reward, 100000, s1);
  CHECK(big.within(3.0));
  CHECK(big.z.size() == 6);

  // Standard errors shrink with the square root of the sample count. Average
  // over repeats since a 10-sample standard error is itself noisy.
  double small_se = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    Rng s2 = make_rng(static_cast<std::uint64_t>(rep), "rl.bias.small");
    const auto small = rl::estimator_bias_test(pol, reward, 10, s2);
    for (double se : small.standard_error) small_se += se;
  }
  small_se /= 200.0;
  double big_se = 0.0;
  for (double se : big.standard_error) big_se += se;
  const double ratio = small_se / big_se;
  CHECK(ratio > std::sqrt(1e4) * 0.8);
  CHECK(ratio < std::sqrt(1e4) * 1.2);

  Rng s3 = make_rng(6, "rl.bias.const");
  const auto flat = rl::estimator_bias_test(pol, [](std::span<const int>) { return 1.0; }, 100000, s3);
  for (double e : flat.estimate) CHECK(std::abs(e) <= 0.02);
  CHECK(flat.within(3.0));
}
