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

#include "ietts/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace ietts::ad {
namespace {

double checked(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string("finite-difference check: non-finite ") + what);
  return v;
}

double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
}

}  // namespace

double finite_difference_check(const std::function<Var(const Var&)>& f,
                               std::span<const double> theta0, double h) {
  const std::size_t n = theta0.size();
  std::vector<double> base(theta0.begin(), theta0.end());
  Var leaf = parameter(Shape{n}, base);
  Var root = f(leaf);
  checked(root.item(), "value at theta0");
  backward(root);
  std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());
  if (analytic.empty()) analytic.assign(n, 0.0);

  NoGradGuard guard;
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> p = base, m = base;
    p[i] += h;
    m[i] -= h;
    const double fp = checked(f(constant(Shape{n}, p)).item(), "value at theta0 + h*e_i");
    const double fm = checked(f(constant(Shape{n}, m)).item(), "value at theta0 - h*e_i");
    worst = std::max(worst, rel_error(analytic[i], (fp - fm) / (2.0 * h)));
  }
  return worst;
}

double finite_difference_check_params(const std::function<Var()>& loss,
                                      std::span<const Var> params, double h,
                                      std::size_t max_coords) {
  std::vector<Var> ps(params.begin(), params.end());
  for (Var& p : ps) p.zero_grad();
  Var root = loss();
  checked(root.item(), "loss");
  backward(root);
  std::vector<std::vector<double>> analytic;
  for (const Var& p : ps) {
    if (p.grad().empty()) {
      analytic.emplace_back(p.numel(), 0.0);
    } else {
      analytic.emplace_back(p.grad().begin(), p.grad().end());
    }
  }

  NoGradGuard guard;
  double worst = 0.0;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    Var& p = ps[k];
    const std::size_t n = p.numel();
    const std::size_t probes = max_coords == 0 ? n : std::min(n, max_coords);
    for (std::size_t j = 0; j < probes; ++j) {
      const std::size_t i = probes == n ? j : (j * n) / probes;
      double& slot = p.mutable_data()[i];
      const double saved = slot;
      slot = saved + h;
      const double fp = checked(loss().item(), "loss at +h");
      slot = saved - h;
      const double fm = checked(loss().item(), "loss at -h");
      slot = saved;
      worst = std::max(worst, rel_error(analytic[k][i], (fp - fm) / (2.0 * h)));
    }
  }
  for (Var& p : ps) p.zero_grad();
  return worst;
}

}  // namespace ietts::ad
