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
#include <string>

#include "doctest.h"
#include "helpers.hpp"
#include "ietts/optim.hpp"

using namespace ietts;
using ad::Shape;
using ad::Var;

namespace {

nn::ParameterSet two_params(Rng& rng) {
  nn::ParameterSet p;
  p.add("a", Shape{2, 3}, testing::uniform(rng, 6));
  p.add("b", Shape{4}, testing::uniform(rng, 4));
  return p;
}

void set_grads(nn::ParameterSet& p, Rng& rng) {
  for (const Var& v : p.vars()) {
    auto& g = v.node().ensure_grad();
    for (double& x : g) x = testing::uniform(rng, 1, -2.0, 2.0)[0];
  }
}

}  // namespace

TEST_CASE("first Adam step moves every coordinate by lr against the gradient sign") {
  Rng rng = make_rng(1, "adam.first");
  auto p = two_params(rng);
  const auto before = p.clone();
  set_grads(p, rng);
  optim::Adam adam(p);
  const double lr = 1e-3;
  adam.step(p, lr);
  CHECK(adam.steps() == 1);
  for (std::size_t k = 0; k < p.size(); ++k) {
    for (std::size_t i = 0; i < p.vars()[k].numel(); ++i) {
      const double g = p.vars()[k].grad()[i];
      const double delta = p.vars()[k][i] - before.vars()[k][i];
      CHECK(std::abs(delta + lr * (g > 0 ? 1.0 : -1.0)) <= lr * 1e-6);
    }
  }
}

TEST_CASE("zero gradients leave parameters unchanged") {
  Rng rng = make_rng(2, "adam.zero");
  auto p = two_params(rng);
  const auto sum = p.checksum();
  optim::Adam adam(p);
  p.zero_grad();
  for (int i = 0; i < 3; ++i) adam.step(p, 1e-2);
  CHECK(p.checksum() == sum);
  // Parameters without any gradient buffer count as zero too.
  nn::ParameterSet q;
  q.add("c", Shape{3}, {1.0, 2.0, 3.0});
  optim::Adam aq(q);
  aq.step(q, 1.0);
  CHECK(q.get("c")[1] == 2.0);
}

TEST_CASE("Adam is deterministic") {
  Rng r1 = make_rng(3, "adam.det"), r2 = make_rng(3, "adam.det");
  auto p1 = two_params(r1), p2 = two_params(r2);
  optim::Adam a1(p1), a2(p2);
  for (int s = 0; s < 5; ++s) {
    set_grads(p1, r1);
    set_grads(p2, r2);
    a1.step(p1, 1e-3);
    a2.step(p2, 1e-3);
  }
  CHECK(p1.checksum() == p2.checksum());
  CHECK(a1.first_moments() == a2.first_moments());
  CHECK(a1.second_moments() == a2.second_moments());
}

TEST_CASE("non-finite gradients are rejected by name without side effects") {
  Rng rng = make_rng(4, "adam.nan");
  auto p = two_params(rng);
  set_grads(p, rng);
  p.get("b").node().ensure_grad()[2] = std::nan("");
  const auto sum = p.checksum();
  optim::Adam adam(p);
  try {
    adam.step(p, 1e-3);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("'b'") != std::string::npos);
  }
  CHECK(p.checksum() == sum);
  CHECK(adam.steps() == 0);
}

TEST_CASE("learning-rate schedule") {
  const optim::Schedule s;
  CHECK(s.base_lr == 1e-3);
  CHECK(s.floor_lr == 1e-5);
  CHECK(optim::lr_at(0, s) == 1e-3);
  CHECK(optim::lr_at(s.decay_start - 1, s) == 1e-3);
  CHECK(optim::lr_at(s.decay_start, s) == doctest::Approx(1e-3));
  CHECK(optim::lr_at(2 * s.decay_start, s) == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(optim::lr_at(3 * s.decay_start / 2, s) == doctest::Approx(1e-4).epsilon(1e-9));
  CHECK(optim::lr_at(1000000000ull, s) == 1e-5);
  double prev = optim::lr_at(0, s);
  for (std::uint64_t t = 1; t < 5000; ++t) {
    const double lr = optim::lr_at(t, s);
    CHECK(lr <= prev);
    CHECK(lr >= s.floor_lr);
    prev = lr;
  }
  optim::Schedule bad;
  bad.floor_lr = 1e-2;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
