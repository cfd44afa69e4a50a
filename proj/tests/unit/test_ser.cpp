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

#include "doctest.h"
#include "helpers.hpp"
#include "ietts/gradcheck.hpp"
#include "ietts/ser.hpp"

using namespace ietts;
using ad::Shape;
using ad::Var;

TEST_CASE("zero parameters give a uniform posterior") {
  const ser::SerHyper h;
  const auto m = ser::SerModel::zeros(h);
  Rng rng = make_rng(1, "ser.zero");
  const auto y = testing::random_sequence(rng, 9, h.channels);
  for (double p : m.posterior(y)) CHECK(p == doctest::Approx(0.2).epsilon(1e-15));
  for (int l = 0; l < 5; ++l) CHECK(m.probability(y, l) == doctest::Approx(0.2));
  CHECK_THROWS_AS(m.probability(y, 5), std::out_of_range);
}

TEST_CASE("posterior is normalised and in range for random parameters") {
  const ser::SerHyper h;
  Rng rng = make_rng(2, "ser.norm");
  const ser::SerModel m(h, rng);
  for (int k = 0; k < 20; ++k) {
    const auto y = testing::random_sequence(rng, 3 + static_cast<std::size_t>(k), h.channels);
    const auto p = m.posterior(y);
    double s = 0.0;
    for (double v : p) {
      CHECK((v >= 0.0 && v <= 1.0));
      s += v;
    }
    CHECK(std::abs(s - 1.0) <= 1e-9);
    const int pred = m.predict(y);
    CHECK(pred == static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin()));
  }
}

TEST_CASE("a single frame gets all attention with a width-1 front end") {
  ser::SerHyper h;
  h.kernel = 1;
  Rng rng = make_rng(3, "ser.t1");
  const ser::SerModel m(h, rng);
  const auto out = m.forward(testing::random_sequence(rng, 1, h.channels).to_constant());
  REQUIRE(out.attention.numel() == 1);
  CHECK(out.attention[0] == 1.0);
}

TEST_CASE("input validation") {
  const ser::SerHyper h;
  Rng rng = make_rng(4, "ser.err");
  const ser::SerModel m(h, rng);
  CHECK_THROWS_AS(m.forward(testing::random_sequence(rng, 2, h.channels).to_constant()), ShapeError);
  CHECK_THROWS_AS(m.forward(testing::random_sequence(rng, 5, h.channels + 1).to_constant()), ShapeError);
}

TEST_CASE("posterior gradient with respect to the input matches finite differences") {
  ser::SerHyper h;
  h.conv_channels = 4;
  h.hidden = 4;
  h.attention = 4;
  Rng rng = make_rng(5, "ser.grad");
  const ser::SerModel m(h, rng);
  for (int trial = 0; trial < 5; ++trial) {
    const auto y0 = testing::random_sequence(rng, 4, h.channels);
    const std::size_t label = static_cast<std::size_t>(trial % 5);
    const double err = ad::finite_difference_check(
        [&](const Var& flat) {
          const Var y = ad::reshape(flat, Shape{y0.frames, y0.channels});
          return ad::sum(ad::slice(m.forward(y).probs, 1, label, label + 1));
        },
        y0.values);
    CHECK(err <= 1e-4);
  }
}

TEST_CASE("noise-free corpus is learned to at least 0.99") {
  corpus::CorpusSpec s;
  s.noise = 0.0;
  const auto c = corpus::generate_corpus(s);
  const auto r = ser::pretrain_ser(c, {}, {}, 1);
  MESSAGE("noise-free test accuracy " << r.test_accuracy << " after " << r.steps_run << " steps");
  CHECK(r.test_accuracy >= 0.99);
}

TEST_CASE("shuffled labels carry no signal") {
  auto c = corpus::generate_corpus(corpus::CorpusSpec{});
  // Permute labels within the training split only; balance is preserved.
  Rng rng = make_rng(6, "ser.shuffle");
  std::vector<int> labels;
  for (const auto& u : c.train) labels.push_back(u.label);
  std::shuffle(labels.begin(), labels.end(), rng);
  for (std::size_t i = 0; i < c.train.size(); ++i) c.train[i].label = labels[i];
  ser::SerTrainConfig cfg;
  cfg.steps = 1000;
  const auto r = ser::pretrain_ser(c, {}, cfg, 1);
  MESSAGE("shuffled-label test accuracy " << r.test_accuracy);
  CHECK(std::abs(r.test_accuracy - 0.2) <= 0.1);
}

TEST_CASE("pretraining is deterministic and time-order sensitive") {
  const auto c = corpus::generate_corpus(testing::tiny_corpus_spec());
  ser::SerTrainConfig cfg;
  cfg.steps = 60;
  cfg.batch_size = 4;
  cfg.eval_every = 20;
  const auto h = testing::tiny_ser_hyper(testing::tiny_corpus_spec());
  const auto a = ser::pretrain_ser(c, h, cfg, 3), b = ser::pretrain_ser(c, h, cfg, 3);
  CHECK(a.model.params().checksum() == b.model.params().checksum());
  CHECK(a.loss_curve == b.loss_curve);

  // Attention pooling is not a plain mean: reversing time changes the output.
  int differ = 0;
  for (const auto& u : c.test) {
    auto rev = u.features;
    for (std::size_t t = 0; t < rev.frames; ++t) {
      for (std::size_t ch = 0; ch < rev.channels; ++ch) {
        rev.values[t * rev.channels + ch] = u.features.at(rev.frames - 1 - t, ch);
      }
    }
    differ += a.model.posterior(rev) != a.model.posterior(u.features);
  }
  CHECK(differ >= static_cast<int>(0.9 * c.test.size()));
}
