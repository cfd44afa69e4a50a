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

#include "ietts/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "ietts/error.hpp"

namespace ietts::optim {

Adam::Adam(const nn::ParameterSet& params, AdamConfig cfg) : cfg_(cfg) {
  for (const auto& p : params.vars()) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step(const nn::ParameterSet& params, double lr) {
  const auto vars = params.vars();
  if (vars.size() != m_.size()) throw std::invalid_argument("Adam: parameter set layout changed");
  for (std::size_t k = 0; k < vars.size(); ++k) {
    for (double g : vars[k].grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter '" + params.names()[k] + "'");
    }
  }
  ++steps_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < vars.size(); ++k) {
    ad::Var p = vars[k];
    auto data = p.mutable_data();
    const auto grad = p.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = grad.empty() ? 0.0 : grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      data[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
    }
  }
}

void Adam::restore(std::uint64_t steps, std::vector<std::vector<double>> m, std::vector<std::vector<double>> v) {
  if (m.size() != m_.size() || v.size() != v_.size()) throw std::invalid_argument("Adam: moment layout mismatch");
  for (std::size_t k = 0; k < m.size(); ++k) {
    if (m[k].size() != m_[k].size() || v[k].size() != v_[k].size()) {
      throw std::invalid_argument("Adam: moment size mismatch at index " + std::to_string(k));
    }
  }
  steps_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

void Schedule::validate() const {
  if (!(base_lr > 0.0) || !(floor_lr > 0.0) || floor_lr > base_lr) {
    throw std::invalid_argument("schedule: need 0 < floor_lr <= base_lr");
  }
  if (batch_size < 1) throw std::invalid_argument("schedule: batch_size must be >= 1");
}

double lr_at(std::uint64_t step, const Schedule& s) {
  if (step < s.decay_start) return s.base_lr;
  if (s.decay_start == 0) return s.floor_lr;
  const double k = std::log(s.base_lr / s.floor_lr) / static_cast<double>(s.decay_start);
  const double lr = s.base_lr * std::exp(-k * static_cast<double>(step - s.decay_start));
  if (step >= 2 * s.decay_start) return s.floor_lr;
  return std::max(lr, s.floor_lr);
}

}  // namespace ietts::optim
