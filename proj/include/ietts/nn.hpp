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

// Layers shared by the generator and the classifier. Each layer is described
// by a LayerSpec; its weights live in a ParameterSet under "<name>.<w>".

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ietts/autodiff.hpp"
#include "ietts/rng.hpp"

namespace ietts::nn {

// Ordered, named collection of parameter leaves. Order is registration
// order and is what checkpoints and optimizers iterate over.
class ParameterSet {
 public:
  ParameterSet() = default;
  // Copies are deep: the copy owns fresh leaves holding the same values.
  ParameterSet(const ParameterSet& other);
  ParameterSet& operator=(const ParameterSet& other);
  ParameterSet(ParameterSet&&) noexcept = default;
  ParameterSet& operator=(ParameterSet&&) noexcept = default;

  const ad::Var& add(std::string name, ad::Shape shape, std::vector<double> values);
  const ad::Var& get(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::span<const ad::Var> vars() const { return vars_; }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return vars_.size(); }
  std::size_t total_numel() const;

  void zero_grad();
  // Hash of names, shapes and the exact bit patterns of all values.
  std::uint64_t checksum() const;
  // Fresh leaves with copied values (no shared storage).
  ParameterSet clone() const;
  // Copies values from a set with identical names and shapes.
  void assign_values(const ParameterSet& other);

 private:
  std::vector<std::string> names_;
  std::vector<ad::Var> vars_;
};

enum class LayerKind { kEmbedding, kRecurrent, kConv1d, kLinear, kAttention };
enum class Direction { kForward, kBidirectional };

struct LayerSpec {
  LayerKind kind = LayerKind::kLinear;
  std::string name;
  std::size_t in = 1;
  // Output width; for recurrent layers this is the state width per direction,
  // for attention the scorer's hidden width.
  std::size_t out = 1;
  std::size_t kernel = 1;  // conv1d only, odd
  Direction direction = Direction::kForward;

  // Throws std::invalid_argument.
  void validate() const;
};

// Glorot-uniform weights in [-s, s], s = sqrt(6 / (fan_in + fan_out));
// biases zero.
void init_parameters(const LayerSpec& spec, Rng& rng, ParameterSet& params);

// Textbook forward pass of one layer:
//   embedding  indices [n] (integral values)     -> [n x out]
//   linear     [N x in]                          -> [N x out]
//   conv1d     [T x in]                          -> [T x out], T preserved
//   recurrent  [T x in]                          -> [T x out] or [T x 2*out]
//   attention  [T x in]                          -> context [1 x in]
ad::Var run_layer(const LayerSpec& spec, const ParameterSet& params, const ad::Var& input);

// Gated recurrent cell with reset and update gates:
//   r = sig(xr + h Ur), z = sig(xz + h Uz), n = tanh(xn + r * (h Un)),
//   h' = n + z * (h - n)
// where [xr | xz | xn] = x W + b is precomputed by project().
class GruCell {
 public:
  GruCell(const ParameterSet& params, const std::string& prefix);
  std::size_t hidden() const { return hidden_; }
  ad::Var project(const ad::Var& x) const;
  ad::Var step(const ad::Var& x_proj_row, const ad::Var& h) const;

  static void init(const std::string& prefix, std::size_t in, std::size_t hidden, Rng& rng,
                   ParameterSet& params);

 private:
  ad::Var w_, u_, b_;
  std::size_t hidden_;
};

struct RecurrentOutput {
  ad::Var states;       // [T x H] or [T x 2H]
  ad::Var last_forward; // [1 x H], state after the final step of the forward pass
};
RecurrentOutput run_recurrent(const LayerSpec& spec, const ParameterSet& params, const ad::Var& x);

struct AttentionPool {
  ad::Var weights;  // [1 x T], softmax over time of v^T tanh(W h_t + b)
  ad::Var context;  // [1 x in]
};
AttentionPool attention_pool(const LayerSpec& spec, const ParameterSet& params, const ad::Var& h);

ad::Var linear(const LayerSpec& spec, const ParameterSet& params, const ad::Var& x);

}  // namespace ietts::nn
