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

// Standalone verification suites shared by the test binaries and the
// `oracle-check` command: finite-difference checks of every op, layer and
// model loss, and the REINFORCE bias test on enumerable toy policies.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ietts/rng.hpp"

namespace ietts::oracle {

// One randomized trial draws shapes and values from `rng`, builds a scalar
// from the op under test and returns the worst relative gradient error.
struct GradCase {
  std::string name;
  std::function<double(Rng&)> trial;
};

// Every differentiable op in the autodiff layer.
const std::vector<GradCase>& op_cases();
// Every layer kind and every assembled loss (classifier cross-entropy,
// teacher-forced agent loss, REINFORCE surrogate).
const std::vector<GradCase>& model_cases();

struct GradResult {
  std::string name;
  std::size_t trials = 0;
  double worst = 0.0;
  bool passed(double tol) const { return worst <= tol; }
};

// Runs `trials` trials of each case; case i uses make_rng(seed, name).
std::vector<GradResult> run_grad_cases(const std::vector<GradCase>& cases, std::size_t trials, std::uint64_t seed);

struct BiasInstance {
  double max_abs_z = 0.0;
  bool within = false;
};
struct BiasSuiteResult {
  std::vector<BiasInstance> instances;
  bool all_within() const;
  double max_abs_z() const;
};

// `instances` toy policies with random logits and a random reward table;
// each compares the mean of `samples` single-sample estimates against the
// enumerated gradient at `sigmas` standard errors.
BiasSuiteResult run_bias_suite(std::size_t length, std::size_t symbols, std::size_t instances, std::size_t samples,
                               double sigmas, std::uint64_t seed);

}  // namespace ietts::oracle
