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

#include <functional>
#include <span>
#include <vector>

#include "ietts/autodiff.hpp"

namespace ietts::ad {

// Maximum over coordinates of |analytic - central| / max(1, |central|),
// where `central` is the central difference with step h. `f` maps a leaf
// holding the parameter vector (shape [n]) to a scalar Var. Throws
// NumericError if any evaluation is non-finite.
double finite_difference_check(const std::function<Var(const Var&)>& f,
                               std::span<const double> theta0, double h = 1e-5);

// Same measure over a set of existing parameter leaves: `loss` rebuilds the
// graph from the current parameter values. At most `max_coords` coordinates
// per leaf are probed (evenly spaced); 0 probes all. Parameter values are
// restored on return and their gradients are left zeroed.
double finite_difference_check_params(const std::function<Var()>& loss,
                                      std::span<const Var> params, double h = 1e-5,
                                      std::size_t max_coords = 0);

}  // namespace ietts::ad
