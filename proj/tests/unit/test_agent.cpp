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

#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "ietts/agent.hpp"
#include "ietts/gradcheck.hpp"

using namespace ietts;
using agent::Agent;
using agent::AgentHyper;
using agent::DecodeMode;
using ad::Shape;
using ad::Var;

namespace {

AgentHyper small_hyper() {
  AgentHyper h;
  h.embed = 8;
  h.hidden = 8;
  h.style = 6;
  h.ref_conv = 6;
  h.ref_hidden = 8;
  h.prenet = 6;
  h.decoder = 12;
  h.max_frames = 40;
  return h;
}

std::vector<int> random_text(Rng& rng, std::size_t n, std::size_t vocab) {
  std::vector<int> t(n);
  for (int& x : t) x = static_cast<int>(rng() % vocab);
  return t;
}

void check_simplex(std::span<const double> w) {
  double s = 0.0;
  for (double v : w) {
    CHECK(v >= 0.0);
    s += v;
  }
  CHECK(std::abs(s - 1.0) <= 1e-9);
}

}  // namespace

TEST_CASE("encode_text shapes and errors") {
  const AgentHyper h = small_hyper();
  Rng rng = make_rng(1, "agent.enc");
  const Agent a(h, rng);
  const std::vector<int> one{3};
  const Var m = a.encode_text(one);
  CHECK(m.shape() == Shape{1, h.hidden});
  const std::vector<int> text{1, 2, 3, 4};
  const Var m1 = a.encode_text(text), m2 = a.encode_text(text);
  CHECK(m1.shape() == Shape{4, h.hidden});
  CHECK(std::vector<double>(m1.data().begin(), m1.data().end()) ==
        std::vector<double>(m2.data().begin(), m2.data().end()));
  CHECK_THROWS_AS(a.encode_text(std::vector<int>{}), std::invalid_argument);
  CHECK_THROWS_AS(a.encode_text(std::vector<int>{1, static_cast<int>(h.vocab)}), std::invalid_argument);
  CHECK_THROWS_AS(a.encode_text(std::vector<int>{-1}), std::invalid_argument);
}

TEST_CASE("hyperparameter validation") {
  Rng rng = make_rng(1, "agent.hyper");
  AgentHyper h = small_hyper();
  h.hidden = 7;
  CHECK_THROWS_AS(Agent(h, rng), std::invalid_argument);
  h = small_hyper();
  h.emotions = 1;
  CHECK_THROWS_AS(Agent(h, rng), std::invalid_argument);
  h = small_hyper();
  h.ref_kernel = 4;
  CHECK_THROWS_AS(Agent(h, rng), std::invalid_argument);
  h = small_hyper();
  h.max_frames = 41;
  CHECK_THROWS_AS(Agent(h, rng), std::invalid_argument);
  h = small_hyper();
  h.prenet_dropout = 1.0;
  CHECK_THROWS_AS(Agent(h, rng), std::invalid_argument);
  h.prenet_dropout = -0.1;
  CHECK_THROWS_AS(Agent(h, rng), std::invalid_argument);
}

TEST_CASE("one style token per emotion") {
  const AgentHyper h = small_hyper();
  Rng rng = make_rng(2, "agent.gst");
  const Agent a(h, rng);
  CHECK(a.params().get("agent.gst.table").shape() == Shape{h.emotions, h.style});
  CHECK(a.sigma() == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("reference weights lie on the simplex") {
  const AgentHyper h = small_hyper();
  Rng rng = make_rng(3, "agent.ref");
  const Agent a(h, rng);
  for (int k = 0; k < 30; ++k) {
    const auto y = testing::random_sequence(rng, 3 + static_cast<std::size_t>(k % 9), h.channels);
    const auto e = a.reference_to_embedding(y);
    REQUIRE(e.weights.shape() == Shape{1, h.emotions});
    check_simplex(e.weights.data());
    const auto e2 = a.reference_to_embedding(y);
    CHECK(std::vector<double>(e.vector.data().begin(), e.vector.data().end()) ==
          std::vector<double>(e2.vector.data().begin(), e2.vector.data().end()));
  }
  CHECK_THROWS_AS(a.reference_to_embedding(testing::random_sequence(rng, 2, h.channels)), ShapeError);
  CHECK_THROWS_AS(a.reference_to_embedding(testing::random_sequence(rng, 5, h.channels + 1)), ShapeError);
}

TEST_CASE("zero parameters give uniform token weights") {
  const AgentHyper h = small_hyper();
  const Agent a = Agent::zeros(h);
  Rng rng = make_rng(4, "agent.zero");
  const auto e = a.reference_to_embedding(testing::random_sequence(rng, 6, h.channels));
  for (double w : e.weights.data()) CHECK(w == doctest::Approx(1.0 / static_cast<double>(h.emotions)).epsilon(1e-15));
  CHECK(a.sigma() == doctest::Approx(h.init_sigma));
}

TEST_CASE("manual token weights") {
  const AgentHyper h = small_hyper();
  Rng rng = make_rng(5, "agent.manual");
  const Agent a(h, rng);
  const Var table = a.params().get("agent.gst.table");
  for (std::size_t i = 0; i < h.emotions; ++i) {
    std::vector<double> w(h.emotions, 0.0);
    w[i] = 1.0;
    const auto e = a.embedding_from_weights(w);
    for (std::size_t d = 0; d < h.style; ++d) CHECK(e.vector[d] == table[i * h.style + d]);
  }
  const std::vector<double> u(h.emotions, 1.0 / static_cast<double>(h.emotions));
  const auto e = a.embedding_from_weights(u);
  for (std::size_t d = 0; d < h.style; ++d) {
    double mean = 0.0;
    for (std::size_t i = 0; i < h.emotions; ++i) mean += table[i * h.style + d];
    mean /= static_cast<double>(h.emotions);
    CHECK(std::abs(e.vector[d] - mean) <= 1e-12);
  }

  std::vector<double> bad(h.emotions, 0.0);
  bad[0] = 1.01;
  CHECK_THROWS_AS(a.embedding_from_weights(bad), std::invalid_argument);
  bad[0] = 1.1;
  bad[1] = -0.1;
  CHECK_THROWS_AS(a.embedding_from_weights(bad), std::invalid_argument);
  CHECK_THROWS_AS(a.embedding_from_weights(std::vector<double>(h.emotions + 1, 1.0 / 6.0)), std::invalid_argument);
  // Within tolerance is accepted.
  std::vector<double> near(h.emotions, 0.0);
  near[0] = 1.0 + 5e-7;
  CHECK_NOTHROW(a.embedding_from_weights(near));
}

TEST_CASE("one-hot synthesis ignores any reference") {
  const AgentHyper h = small_hyper();
  Rng rng = make_rng(6, "agent.onehot");
  const Agent a(h, rng);
  const auto text = random_text(rng, 4, h.vocab);
  std::vector<double> w(h.emotions, 0.0);
  w[2] = 1.0;
  const auto base = a.synthesize(text, w);
  for (int k = 0; k < 5; ++k) {
    // Reference computations in between must not leak into synthesis.
    (void)a.reference_to_embedding(testing::random_sequence(rng, 8, h.channels));
    CHECK(a.synthesize(text, w) == base);
  }
  // Perturbing the reference encoder parameters does not matter either.
  Agent b = a;
  for (std::size_t i = 0; i < b.params().size(); ++i) {
    const std::string& name = b.params().names()[i];
    if (name.rfind("agent.ref", 0) == 0) {
      Var v = b.params().vars()[i];
      for (double& x : v.mutable_data()) x += 0.5;
    }
  }
  CHECK(b.synthesize(text, w) == base);
}

TEST_CASE("synthesis with reference weights matches the reference-conditioned decode") {
  const AgentHyper h = small_hyper();
  Rng rng = make_rng(7, "agent.same");
  const Agent a(h, rng);
  const auto text = random_text(rng, 3, h.vocab);
  const auto y = testing::random_sequence(rng, 7, h.channels);
  const auto e = a.reference_to_embedding(y);
  std::vector<double> w(e.weights.data().begin(), e.weights.data().end());
  const auto via_weights = a.synthesize(text, w);
  const auto via_ref = a.synthesize_from_reference(text, y);
  REQUIRE(via_weights.frames == via_ref.frames);
  for (std::size_t i = 0; i < via_ref.values.size(); ++i) {
    CHECK(std::abs(via_weights.values[i] - via_ref.values[i]) <= 1e-12);
  }
  CHECK(a.synthesize_from_reference(text, y) == via_ref);
}

TEST_CASE("sampled log-probability matches the closed-form Gaussian density") {
  const AgentHyper h = small_hyper();
  Rng rng = make_rng(8, "agent.logp");
  const Agent a(h, rng);
  for (int k = 0; k < 10; ++k) {
    const auto text = random_text(rng, 2 + static_cast<std::size_t>(k % 4), h.vocab);
    const auto e = a.reference_to_embedding(testing::random_sequence(rng, 6, h.channels));
    const Var mem = a.encode_text(text);
    Rng srng = make_rng(100 + static_cast<std::uint64_t>(k), "sample");
    const auto s = a.decode(mem, e, DecodeMode::kSampled, nullptr, &srng);
    REQUIRE(s.log_prob.defined());
    REQUIRE(s.features.frames == s.means.frames);
    CHECK(s.stop_frame == s.features.frames);
    CHECK(s.stop_frame <= h.max_frames);
    const double sigma = a.sigma();
    double lp = 0.0;
    for (std::size_t i = 0; i < s.features.values.size(); ++i) {
      const double d = s.features.values[i] - s.means.values[i];
      lp += -0.5 * std::log(2.0 * std::numbers::pi * sigma * sigma) - d * d / (2.0 * sigma * sigma);
    }
    CHECK(std::abs(s.log_prob.item() - lp) <= 1e-9);

    if (s.features.frames % h.reduction == 0) {
      const Var again = a.log_prob_of(mem, e, s.features);
      CHECK(std::abs(again.item() - s.log_prob.item()) <= 1e-9);
    }
  }
}

TEST_CASE("small sigma collapses samples onto the mean") {
  AgentHyper h = small_hyper();
  h.init_sigma = 1e-9;
  Rng rng = make_rng(9, "agent.sigma");
  const Agent a(h, rng);
  const auto text = random_text(rng, 3, h.vocab);
  const auto e = a.reference_to_embedding(testing::random_sequence(rng, 6, h.channels));
  Rng srng = make_rng(9, "sample");
  const auto s = a.decode(a.encode_text(text), e, DecodeMode::kSampled, nullptr, &srng);
  const double per = -0.5 * std::log(2.0 * std::numbers::pi * 1e-18);
  for (std::size_t i = 0; i < s.features.values.size(); ++i) {
    CHECK(std::abs(s.features.values[i] - s.means.values[i]) <= 1e-7);
  }
  // The quadratic part stays O(1) per element while the normaliser grows.
  const double n = static_cast<double>(s.features.values.size());
  CHECK(std::abs(s.log_prob.item() / n - per) <= 0.05 * per);
}

TEST_CASE("mean and teacher decodes carry no log-probability") {
  const AgentHyper h = small_hyper();
  Rng rng = make_rng(10, "agent.modes");
  const Agent a(h, rng);
  const auto text = random_text(rng, 3, h.vocab);
  const auto y = testing::random_sequence(rng, 8, h.channels);
  const auto e = a.reference_to_embedding(y);
  const Var mem = a.encode_text(text);
  const auto m = a.decode(mem, e, DecodeMode::kMean);
  CHECK_FALSE(m.log_prob.defined());
  CHECK(m.features == m.means);
  const auto t = a.decode(mem, e, DecodeMode::kTeacher, &y);
  CHECK_FALSE(t.log_prob.defined());
  CHECK(t.means.frames == 8);
  CHECK_THROWS_AS(a.decode(mem, e, DecodeMode::kTeacher), std::invalid_argument);
  CHECK_THROWS_AS(a.decode(mem, e, DecodeMode::kSampled), std::invalid_argument);
  CHECK_THROWS_AS(a.log_prob_of(mem, e, testing::random_sequence(rng, 3, h.channels)), std::invalid_argument);
}

TEST_CASE("prenet dropout only touches teacher-forced training") {
  const AgentHyper h = small_hyper();
  Rng rng = make_rng(14, "agent.dropout");
  const Agent a(h, rng);
  const auto text = random_text(rng, 4, h.vocab);
  const auto y = testing::random_sequence(rng, 8, h.channels);
  const auto e = a.reference_to_embedding(y);
  const Var mem = a.encode_text(text);
  Rng d1 = make_rng(1, "mask"), d2 = make_rng(1, "mask"), d3 = make_rng(2, "mask");
  const auto plain = a.decode(mem, e, DecodeMode::kTeacher, &y);
  const auto m1 = a.decode(mem, e, DecodeMode::kTeacher, &y, nullptr, &d1);
  const auto m2 = a.decode(mem, e, DecodeMode::kTeacher, &y, nullptr, &d2);
  const auto m3 = a.decode(mem, e, DecodeMode::kTeacher, &y, nullptr, &d3);
  CHECK(m1.means == m2.means);
  CHECK(m1.means != plain.means);
  CHECK(m1.means != m3.means);
  Rng d4 = make_rng(3, "mask");
  CHECK_THROWS_AS(a.decode(mem, e, DecodeMode::kMean, nullptr, nullptr, &d4), std::invalid_argument);

  AgentHyper off = h;
  off.prenet_dropout = 0.0;
  Rng r2 = make_rng(14, "agent.dropout");
  const Agent b(off, r2);
  Rng d5 = make_rng(1, "mask");
  const Var bmem = b.encode_text(text);
  const auto be = b.reference_to_embedding(y);
  CHECK(b.decode(bmem, be, DecodeMode::kTeacher, &y, nullptr, &d5).means ==
        b.decode(bmem, be, DecodeMode::kTeacher, &y).means);
}

TEST_CASE("attention means never move backwards") {
  const AgentHyper h = small_hyper();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng = make_rng(seed, "agent.kappa");
    const Agent a(h, rng);
    const auto text = random_text(rng, 5, h.vocab);
    const auto e = a.reference_to_embedding(testing::random_sequence(rng, 6, h.channels));
    Rng srng = make_rng(seed, "sample");
    const auto s = a.decode(a.encode_text(text), e, DecodeMode::kSampled, nullptr, &srng);
    REQUIRE(!s.attention_means.empty());
    for (std::size_t j = 1; j < s.attention_means.size(); ++j) {
      for (std::size_t m = 0; m < h.mixtures; ++m) CHECK(s.attention_means[j][m] >= s.attention_means[j - 1][m]);
    }
  }
}

TEST_CASE("mean decode is deterministic and flags the frame limit") {
  AgentHyper h = small_hyper();
  h.max_frames = 6;
  h.min_frames = 3;
  const Agent a = Agent::zeros(h);  // stop logit 0 never exceeds one half
  Rng rng = make_rng(11, "agent.det");
  const auto text = random_text(rng, 4, h.vocab);
  const auto e = a.embedding_from_weights(std::vector<double>(h.emotions, 1.0 / static_cast<double>(h.emotions)));
  const auto s1 = a.decode(a.encode_text(text), e, DecodeMode::kMean);
  const auto s2 = a.decode(a.encode_text(text), e, DecodeMode::kMean);
  CHECK(s1.features == s2.features);
  CHECK(s1.hit_max);
  CHECK(s1.stop_frame == h.max_frames);
}

TEST_CASE("mse term examples") {
  Rng rng = make_rng(12, "agent.mse");
  const auto y = testing::random_sequence(rng, 6, 3);
  CHECK(agent::mse_term(y.to_constant(), y).item() == 0.0);
  auto shifted = y;
  for (double& v : shifted.values) v += 0.25;
  CHECK(agent::mse_term(shifted.to_constant(), y).item() == doctest::Approx(0.0625).epsilon(1e-12));
  // Only the overlapping frames count.
  auto longer = shifted;
  longer.frames += 2;
  longer.values.resize(longer.frames * 3, 100.0);
  CHECK(agent::mse_term(longer.to_constant(), y).item() == doctest::Approx(0.0625).epsilon(1e-12));
  CHECK_THROWS_AS(agent::mse_term(testing::random_sequence(rng, 6, 4).to_constant(), y), ShapeError);
}

TEST_CASE("teacher-forced loss gradient matches finite differences") {
  const auto spec = testing::tiny_corpus_spec();
  const AgentHyper h = testing::tiny_agent_hyper(spec);
  Rng rng = make_rng(13, "agent.fd");
  Agent a(h, rng);
  // Keep the prenet away from its kink at the zero first frame.
  for (const Var& v : a.params().vars()) {
    Var w = v;
    for (double& x : w.mutable_data()) x += testing::uniform(rng, 1, -0.3, 0.3)[0];
  }
  const std::vector<int> text{1, 4, 2};
  const auto y = testing::random_sequence(rng, 6, h.channels);
  const double err = ad::finite_difference_check_params(
      [&] { return a.mse_loss(text, y, y).total; }, a.params().vars(), 1e-5, 4);
  CHECK(err <= 1e-4);
}
