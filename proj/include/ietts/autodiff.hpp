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

// Reverse-mode automatic differentiation over dense float64 arrays.
//
// The tape is dynamic: every op returns a new Node that holds shared
// references to its inputs and a closure propagating its gradient back to
// them. Dropping the root releases the graph. Parameters are long-lived leaf
// Nodes; their gradients accumulate across backward() calls until zeroed.

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ietts/error.hpp"

namespace ietts::ad {

class Shape {
 public:
  static constexpr std::size_t kMaxRank = 4;

  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::vector<std::size_t> dims);

  std::size_t rank() const { return dims_.size(); }
  std::size_t operator[](std::size_t i) const { return dims_[i]; }
  std::size_t numel() const;
  const std::vector<std::size_t>& dims() const { return dims_; }
  std::string str() const;

  friend bool operator==(const Shape& a, const Shape& b) { return a.dims_ == b.dims_; }

 private:
  std::vector<std::size_t> dims_;
};

struct Node {
  Shape shape;
  std::vector<double> data;
  // Empty until the first gradient contribution arrives.
  std::vector<double> grad;
  bool requires_grad = false;
  bool backward_done = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  std::vector<double>& ensure_grad();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->data.size(); }
  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  // Empty span when no gradient has been accumulated.
  std::span<const double> grad() const { return node_->grad; }
  double item() const;
  double operator[](std::size_t i) const { return node_->data[i]; }
  bool requires_grad() const { return node_->requires_grad; }
  const char* op() const { return node_->op; }

  void zero_grad();

  Node& node() const { return *node_; }
  const std::shared_ptr<Node>& ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Leaves.
Var constant(Shape shape, std::vector<double> values);
Var constant_fill(Shape shape, double value);
Var scalar(double value);
Var parameter(Shape shape, std::vector<double> values);

// Disables graph recording on this thread while alive. Forward values are
// still computed; results never require grad.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

// Populates grad of every requires_grad ancestor of a one-element root.
// Throws if the root is not scalar-shaped or was already back-propagated
// (call reset_backward() first).
void backward(const Var& root);
void reset_backward(const Var& root);

// --- element-wise, numpy-style broadcasting over trailing dims ---
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var broadcast_to(const Var& a, const Shape& shape);

Var neg(const Var& a);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var square(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var softplus(const Var& a);

// --- linear algebra ---
// [m x k] * [k x n] -> [m x n]
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
// x: [T x Cin], w: [K x Cin x Cout] with odd K, bias: [Cout] or undefined.
// Zero padding of (K-1)/2 on both ends keeps T. Throws if T < K.
Var conv1d(const Var& x, const Var& w, const Var& bias);

// --- normalisation over the last axis ---
Var softmax(const Var& a);
Var log_softmax(const Var& a);

// --- reductions ---
Var sum(const Var& a);
Var mean(const Var& a);
// Removes the reduced axis (rank stays >= 1).
Var sum(const Var& a, std::size_t axis);

// --- structural ---
Var concat(std::span<const Var> parts, std::size_t axis);
Var concat(std::initializer_list<Var> parts, std::size_t axis);
Var slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t end);
Var reshape(const Var& a, const Shape& shape);
// table: [V x D]; returns [indices.size() x D].
Var gather_rows(const Var& table, std::span<const int> indices);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }

}  // namespace ietts::ad
