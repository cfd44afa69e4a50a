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

#pragma once

#include <cstdint>
#include <vector>

#include "ietts/nn.hpp"

namespace ietts::optim {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam. Moments are laid out like the ParameterSet it was
// built for.
class Adam {
 public:
  Adam() = default;
  explicit Adam(const nn::ParameterSet& params, AdamConfig cfg = {});

  // Applies one update from the accumulated gradients (a parameter without
  // a gradient counts as zero). Throws NumericError naming the parameter if
  // any gradient is non-finite; nothing is modified in that case.
  void step(const nn::ParameterSet& params, double lr);

  std::uint64_t steps() const { return steps_; }
  const AdamConfig& config() const { return cfg_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void restore(std::uint64_t steps, std::vector<std::vector<double>> m, std::vector<std::vector<double>> v);

 private:
  AdamConfig cfg_;
  std::uint64_t steps_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

struct Schedule {
  double base_lr = 1e-3;
  std::uint64_t decay_start = 1000;
  double floor_lr = 1e-5;
  std::uint64_t pretrain_steps = 2000;
  std::uint64_t iterative_epochs = 50;
  std::size_t batch_size = 32;

  // Throws std::invalid_argument.
  void validate() const;
};

// base_lr before decay_start, then exponential decay reaching floor_lr at
// 2 * decay_start, clamped at floor_lr afterwards.
double lr_at(std::uint64_t step, const Schedule& s);

}  // namespace ietts::optim
