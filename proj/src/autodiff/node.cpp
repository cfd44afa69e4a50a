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

#include <algorithm>
#include <unordered_set>

#include "ietts/autodiff.hpp"

namespace ietts::ad {
namespace {

thread_local bool t_grad_enabled = true;

void check_dims(const std::vector<std::size_t>& dims) {
  if (dims.empty() || dims.size() > Shape::kMaxRank) {
    throw ShapeError("shape rank must be in [1, 4], got " + std::to_string(dims.size()));
  }
  for (std::size_t d : dims) {
    if (d == 0) throw ShapeError("shape dims must be >= 1");
  }
}

Var make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  if (values.size() != shape.numel()) {
    throw ShapeError("leaf of shape " + shape.str() + " given " + std::to_string(values.size()) +
                     " values");
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(values);
  n->requires_grad = requires_grad;
  return Var(std::move(n));
}

}  // namespace

Shape::Shape(std::initializer_list<std::size_t> dims) : dims_(dims) { check_dims(dims_); }

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) { check_dims(dims_); }

std::size_t Shape::numel() const {
  std::size_t n = 1;
  for (std::size_t d : dims_) n *= d;
  return dims_.empty() ? 0 : n;
}

std::string Shape::str() const {
  std::string s = "[";
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(dims_[i]);
  }
  return s + "]";
}

std::vector<double>& Node::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

double Var::item() const {
  if (numel() != 1) throw ShapeError("item() on non-scalar of shape " + shape().str());
  return node_->data[0];
}

void Var::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Var constant(Shape shape, std::vector<double> values) {
  return make_leaf(std::move(shape), std::move(values), false);
}

Var constant_fill(Shape shape, double value) {
  std::vector<double> v(shape.numel(), value);
  return make_leaf(std::move(shape), std::move(v), false);
}

Var scalar(double value) { return make_leaf(Shape{1}, {value}, false); }

Var parameter(Shape shape, std::vector<double> values) {
  return make_leaf(std::move(shape), std::move(values), true);
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

namespace {

// Post-order over requires_grad nodes; inputs precede their consumers.
std::vector<Node*> topo_order(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace

void backward(const Var& root) {
  if (!root.defined()) throw Error("backward() on undefined Var");
  if (root.numel() != 1) {
    throw ShapeError("backward() requires a scalar root, got shape " + root.shape().str());
  }
  Node* r = &root.node();
  if (r->backward_done) {
    throw Error("backward() already called on this root; call reset_backward() first");
  }
  if (!r->requires_grad) {
    r->backward_done = true;
    return;
  }
  const std::vector<Node*> order = topo_order(r);
  r->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  r->backward_done = true;
}

void reset_backward(const Var& root) {
  Node* r = &root.node();
  for (Node* n : topo_order(r)) {
    if (!n->inputs.empty()) n->grad.clear();
  }
  r->backward_done = false;
}

}  // namespace ietts::ad
