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
#include <fstream>
#include <limits>

#include "doctest.h"
#include "helpers.hpp"
#include "ietts/checkpoint.hpp"
#include "ietts/trainer.hpp"

using namespace ietts;
using ad::Shape;

TEST_CASE("sections round-trip bit-exact through bytes and files") {
  ckpt::Checkpoint c;
  c.put_f64("x", {1.0, -0.0, std::numeric_limits<double>::denorm_min(), 1e300, std::nan("")}, {5});
  c.put_u64("n", {0, 1, UINT64_MAX}, {3});
  c.put_f64("m", {1, 2, 3, 4, 5, 6}, {2, 3});
  const std::string bytes = c.serialize();
  const auto back = ckpt::Checkpoint::parse(bytes);
  CHECK(back.serialize() == bytes);
  CHECK(back.u64("n") == c.u64("n"));
  CHECK(std::signbit(back.f64("x")[1]));
  CHECK(std::isnan(back.f64("x")[4]));
  CHECK(back.get("m").dims == std::vector<std::uint64_t>{2, 3});

  const auto dir = testing::scratch_dir("ckpt_rt");
  c.save(dir / "a.ckpt");
  CHECK(ckpt::Checkpoint::load(dir / "a.ckpt").serialize() == bytes);

  // Replacing a section keeps one copy.
  c.put_u64("n", {7});
  CHECK(c.u64_scalar("n") == 7);
  CHECK(c.sections().size() == 3);
}

TEST_CASE("lookup errors") {
  ckpt::Checkpoint c;
  c.put_u64("n", {1, 2});
  CHECK_THROWS_AS(c.f64("n"), FormatError);
  CHECK_THROWS_AS(c.u64("missing"), FormatError);
  CHECK_THROWS_AS(c.u64_scalar("n"), FormatError);
  CHECK_THROWS_AS(c.put_f64("bad", {1.0, 2.0}, {3}), std::invalid_argument);
}

TEST_CASE("corrupted, truncated and foreign files are rejected") {
  ckpt::Checkpoint c;
  c.put_f64("x", {1.0, 2.0, 3.0});
  const std::string bytes = c.serialize();
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    std::string bad = bytes;
    bad[i] = static_cast<char>(bad[i] ^ 0x5a);
    CHECK_THROWS_AS(ckpt::Checkpoint::parse(bad), FormatError);
  }
  for (std::size_t n = 0; n < bytes.size(); n += 5) {
    CHECK_THROWS_AS(ckpt::Checkpoint::parse(bytes.substr(0, n)), FormatError);
  }
  CHECK_THROWS_AS(ckpt::Checkpoint::parse(bytes + "x"), FormatError);
  const auto dir = testing::scratch_dir("ckpt_bad");
  CHECK_THROWS(ckpt::Checkpoint::load(dir / "missing.ckpt"));
}

TEST_CASE("parameters, optimizer and rng state round-trip") {
  Rng rng = make_rng(1, "ckpt.params");
  nn::ParameterSet p;
  p.add("a", Shape{2, 2}, testing::uniform(rng, 4));
  p.add("b", Shape{3}, testing::uniform(rng, 3));
  optim::Adam adam(p);
  for (const auto& v : p.vars()) v.node().ensure_grad().assign(v.numel(), 0.5);
  adam.step(p, 1e-3);

  ckpt::Checkpoint c;
  c.put_params("theta", p);
  c.put_adam("opt", adam, p);
  c.put_rng("rng", rng);
  const auto back = ckpt::Checkpoint::parse(c.serialize());

  nn::ParameterSet q = p.clone();
  for (const auto& v : q.vars()) {
    ad::Var w = v;
    for (double& x : w.mutable_data()) x = 0.0;
  }
  back.load_params("theta", q);
  CHECK(q.checksum() == p.checksum());
  optim::Adam adam2(q);
  back.load_adam("opt", adam2, q);
  CHECK(adam2.steps() == 1);
  CHECK(adam2.first_moments() == adam.first_moments());
  CHECK(adam2.second_moments() == adam.second_moments());
  Rng r2;
  back.load_rng("rng", r2);
  CHECK(r2() == rng());

  nn::ParameterSet other;
  other.add("a", Shape{4}, std::vector<double>(4));
  CHECK_THROWS_AS(back.load_params("theta", other), FormatError);
}

TEST_CASE("agent checkpoint of an untrained agent equals its initialisation") {
  const auto spec = testing::tiny_corpus_spec();
  Rng rng = make_rng(2, "ckpt.agent");
  const agent::Agent a(testing::tiny_agent_hyper(spec), rng);
  const optim::Adam adam(a.params());
  const auto c = train::agent_checkpoint(a, adam, 0, 42);
  const auto loaded = train::load_agent(ckpt::Checkpoint::parse(c.serialize()));
  CHECK(loaded.agent.params().checksum() == a.params().checksum());
  CHECK(loaded.pretrain_steps == 0);
  CHECK(loaded.corpus_hash == 42);
  CHECK(loaded.adam.steps() == 0);
}
