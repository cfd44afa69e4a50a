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

#include "ietts/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace ietts::nn {

using ad::Shape;
using ad::Var;

ParameterSet::ParameterSet(const ParameterSet& other) : ParameterSet(other.clone()) {}

ParameterSet& ParameterSet::operator=(const ParameterSet& other) {
  if (this != &other) *this = other.clone();
  return *this;
}

const Var& ParameterSet::add(std::string name, Shape shape, std::vector<double> values) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  names_.push_back(std::move(name));
  vars_.push_back(ad::parameter(std::move(shape), std::move(values)));
  return vars_.back();
}

const Var& ParameterSet::get(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return vars_[i];
  throw std::out_of_range("unknown parameter '" + std::string(name) + "'");
}

bool ParameterSet::contains(std::string_view name) const {
  for (const auto& n : names_)
    if (n == name) return true;
  return false;
}

std::size_t ParameterSet::total_numel() const {
  std::size_t n = 0;
  for (const Var& v : vars_) n += v.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (Var& v : vars_) v.zero_grad();
}

std::uint64_t ParameterSet::checksum() const {
  std::uint64_t h = fnv1a(std::string_view("params"));
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    h = fnv1a(names_[i], h);
    h = fnv1a(vars_[i].shape().str(), h);
    h = fnv1a(vars_[i].data(), h);
  }
  return h;
}

ParameterSet ParameterSet::clone() const {
  ParameterSet out;
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    out.add(names_[i], vars_[i].shape(), std::vector<double>(vars_[i].data().begin(), vars_[i].data().end()));
  }
  return out;
}

void ParameterSet::assign_values(const ParameterSet& other) {
  if (other.names_ != names_) throw std::invalid_argument("parameter sets have different layouts");
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    if (!(vars_[i].shape() == other.vars_[i].shape())) {
      throw std::invalid_argument("parameter '" + names_[i] + "' shape mismatch");
    }
    auto dst = vars_[i].mutable_data();
    auto src = other.vars_[i].data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

void LayerSpec::validate() const {
  if (in < 1 || out < 1) throw std::invalid_argument("layer '" + name + "': widths must be >= 1");
  if (kind == LayerKind::kConv1d && (kernel < 1 || kernel % 2 == 0)) {
    throw std::invalid_argument("layer '" + name + "': conv kernel width must be odd");
  }
}

namespace {

std::vector<double> glorot(Rng& rng, std::size_t n, std::size_t fan_in, std::size_t fan_out) {
  const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-s, s);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

void check_width(const LayerSpec& spec, const Var& x, std::size_t expect) {
  const auto& s = x.shape();
  if (s.rank() != 2 || s[1] != expect) {
    throw ShapeError("layer '" + spec.name + "': expected input width " + std::to_string(expect) +
                     ", got shape " + s.str());
  }
}

}  // namespace

void GruCell::init(const std::string& prefix, std::size_t in, std::size_t hidden, Rng& rng,
                   ParameterSet& params) {
  params.add(prefix + ".W", Shape{in, 3 * hidden}, glorot(rng, in * 3 * hidden, in, 3 * hidden));
  params.add(prefix + ".U", Shape{hidden, 3 * hidden},
             glorot(rng, hidden * 3 * hidden, hidden, 3 * hidden));
  params.add(prefix + ".b", Shape{3 * hidden}, std::vector<double>(3 * hidden, 0.0));
}

GruCell::GruCell(const ParameterSet& params, const std::string& prefix)
    : w_(params.get(prefix + ".W")),
      u_(params.get(prefix + ".U")),
      b_(params.get(prefix + ".b")),
      hidden_(params.get(prefix + ".U").shape()[0]) {}

Var GruCell::project(const Var& x) const { return ad::matmul(x, w_) + b_; }

Var GruCell::step(const Var& xp, const Var& h) const {
  const std::size_t H = hidden_;
  const Var hu = ad::matmul(h, u_);
  const Var rz = ad::sigmoid(ad::slice(xp, 1, 0, 2 * H) + ad::slice(hu, 1, 0, 2 * H));
  const Var r = ad::slice(rz, 1, 0, H);
  const Var z = ad::slice(rz, 1, H, 2 * H);
  const Var n = ad::tanh(ad::slice(xp, 1, 2 * H, 3 * H) + r * ad::slice(hu, 1, 2 * H, 3 * H));
  return n + z * (h - n);
}

void init_parameters(const LayerSpec& spec, Rng& rng, ParameterSet& params) {
  spec.validate();
  const std::string& p = spec.name;
  switch (spec.kind) {
    case LayerKind::kEmbedding:
      params.add(p + ".table", Shape{spec.in, spec.out}, glorot(rng, spec.in * spec.out, spec.in, spec.out));
      break;
    case LayerKind::kLinear:
      params.add(p + ".W", Shape{spec.in, spec.out}, glorot(rng, spec.in * spec.out, spec.in, spec.out));
      params.add(p + ".b", Shape{spec.out}, std::vector<double>(spec.out, 0.0));
      break;
    case LayerKind::kConv1d:
      params.add(p + ".W", Shape{spec.kernel, spec.in, spec.out},
                 glorot(rng, spec.kernel * spec.in * spec.out, spec.kernel * spec.in, spec.kernel * spec.out));
      params.add(p + ".b", Shape{spec.out}, std::vector<double>(spec.out, 0.0));
      break;
    case LayerKind::kRecurrent:
      GruCell::init(p + ".fw", spec.in, spec.out, rng, params);
      if (spec.direction == Direction::kBidirectional) GruCell::init(p + ".bw", spec.in, spec.out, rng, params);
      break;
    case LayerKind::kAttention:
      params.add(p + ".W", Shape{spec.in, spec.out}, glorot(rng, spec.in * spec.out, spec.in, spec.out));
      params.add(p + ".b", Shape{spec.out}, std::vector<double>(spec.out, 0.0));
      params.add(p + ".v", Shape{spec.out, 1}, glorot(rng, spec.out, spec.out, 1));
      break;
  }
}

Var linear(const LayerSpec& spec, const ParameterSet& params, const Var& x) {
  check_width(spec, x, spec.in);
  return ad::matmul(x, params.get(spec.name + ".W")) + params.get(spec.name + ".b");
}

namespace {

Var run_direction(const GruCell& cell, const Var& x, bool reverse) {
  const std::size_t T = x.shape()[0];
  const Var xp = cell.project(x);
  Var h = ad::constant_fill(Shape{1, cell.hidden()}, 0.0);
  std::vector<Var> out(T);
  for (std::size_t k = 0; k < T; ++k) {
    const std::size_t t = reverse ? T - 1 - k : k;
    h = cell.step(ad::slice(xp, 0, t, t + 1), h);
    out[t] = h;
  }
  return ad::concat(out, 0);
}

}  // namespace

RecurrentOutput run_recurrent(const LayerSpec& spec, const ParameterSet& params, const Var& x) {
  check_width(spec, x, spec.in);
  const std::size_t T = x.shape()[0];
  GruCell fw(params, spec.name + ".fw");
  RecurrentOutput r;
  const Var f = run_direction(fw, x, false);
  r.last_forward = ad::slice(f, 0, T - 1, T);
  if (spec.direction == Direction::kBidirectional) {
    GruCell bw(params, spec.name + ".bw");
    r.states = ad::concat({f, run_direction(bw, x, true)}, 1);
  } else {
    r.states = f;
  }
  return r;
}

AttentionPool attention_pool(const LayerSpec& spec, const ParameterSet& params, const Var& h) {
  check_width(spec, h, spec.in);
  const std::size_t T = h.shape()[0];
  const Var hidden = ad::tanh(ad::matmul(h, params.get(spec.name + ".W")) + params.get(spec.name + ".b"));
  const Var scores = ad::reshape(ad::matmul(hidden, params.get(spec.name + ".v")), Shape{1, T});
  AttentionPool out;
  out.weights = ad::softmax(scores);
  out.context = ad::matmul(out.weights, h);
  return out;
}

Var run_layer(const LayerSpec& spec, const ParameterSet& params, const Var& input) {
  switch (spec.kind) {
    case LayerKind::kEmbedding: {
      std::vector<int> idx;
      idx.reserve(input.numel());
      for (double v : input.data()) idx.push_back(static_cast<int>(std::lround(v)));
      return ad::gather_rows(params.get(spec.name + ".table"), idx);
    }
    case LayerKind::kLinear:
      return linear(spec, params, input);
    case LayerKind::kConv1d:
      check_width(spec, input, spec.in);
      return ad::conv1d(input, params.get(spec.name + ".W"), params.get(spec.name + ".b"));
    case LayerKind::kRecurrent:
      return run_recurrent(spec, params, input).states;
    case LayerKind::kAttention:
      return attention_pool(spec, params, input).context;
  }
  throw std::logic_error("unhandled layer kind");
}

}  // namespace ietts::nn
