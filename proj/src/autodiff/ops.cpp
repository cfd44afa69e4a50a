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
#include <cmath>

#include "ietts/autodiff.hpp"
#include "ietts/kernels.hpp"

namespace ietts::ad {
namespace {

using Backward = std::function<void(Node&)>;

// Wraps a freshly computed value. The provenance record (inputs and
// backward closure) is kept only when some input needs a gradient.
Var make_result(const char* op, Shape shape, std::vector<double> data,
                std::initializer_list<const Var*> inputs, Backward fn) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->op = op;
  bool needs = false;
  if (grad_enabled()) {
    for (const Var* v : inputs) needs = needs || v->requires_grad();
  }
  if (needs) {
    n->requires_grad = true;
    for (const Var* v : inputs) n->inputs.push_back(v->ptr());
    n->backward_fn = std::move(fn);
  }
  return Var(std::move(n));
}

Var make_result_n(const char* op, Shape shape, std::vector<double> data,
                  std::span<const Var> inputs, Backward fn) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->op = op;
  bool needs = false;
  if (grad_enabled()) {
    for (const Var& v : inputs) needs = needs || v.requires_grad();
  }
  if (needs) {
    n->requires_grad = true;
    for (const Var& v : inputs) n->inputs.push_back(v.ptr());
    n->backward_fn = std::move(fn);
  }
  return Var(std::move(n));
}

// Gradient sink for input i, or nullptr when that input takes no gradient.
double* grad_of(Node& self, std::size_t i) {
  Node& in = *self.inputs[i];
  return in.requires_grad ? in.ensure_grad().data() : nullptr;
}

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.str() + " and " + b.str());
}

void require_defined(const char* op, const Var& a) {
  if (!a.defined()) throw Error(std::string(op) + ": undefined operand");
}

Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.rank(), b.rank());
  std::vector<std::size_t> out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t da = i < r - a.rank() ? 1 : a[i - (r - a.rank())];
    const std::size_t db = i < r - b.rank() ? 1 : b[i - (r - b.rank())];
    if (da != db && da != 1 && db != 1) shape_mismatch(op, a, b);
    out[i] = std::max(da, db);
  }
  return Shape(std::move(out));
}

// For each element of `out`, the flat offset of the broadcast source element
// in `in`. Empty when the shapes are identical.
std::vector<std::size_t> broadcast_offsets(const Shape& in, const Shape& out) {
  if (in == out) return {};
  const std::size_t r = out.rank();
  std::vector<std::size_t> stride(r, 0);
  std::size_t s = 1;
  for (std::size_t i = r; i-- > 0;) {
    const std::size_t k = r - i;  // position from the back
    if (k <= in.rank()) {
      const std::size_t d = in[in.rank() - k];
      stride[i] = d == 1 ? 0 : s;
      s *= d;
    }
  }
  std::vector<std::size_t> offsets(out.numel());
  std::vector<std::size_t> idx(r, 0);
  std::size_t off = 0;
  for (std::size_t flat = 0; flat < offsets.size(); ++flat) {
    offsets[flat] = off;
    for (std::size_t i = r; i-- > 0;) {
      ++idx[i];
      off += stride[i];
      if (idx[i] < out[i]) break;
      off -= stride[i] * idx[i];
      idx[i] = 0;
    }
  }
  return offsets;
}

template <class F, class DA, class DB>
Var binary(const char* op, const Var& a, const Var& b, F f, DA da, DB db) {
  require_defined(op, a);
  require_defined(op, b);
  Shape out = broadcast_shape(op, a.shape(), b.shape());
  auto oa = broadcast_offsets(a.shape(), out);
  auto ob = broadcast_offsets(b.shape(), out);
  const std::size_t n = out.numel();
  std::vector<double> y(n);
  const double* x0 = a.data().data();
  const double* x1 = b.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = f(x0[oa.empty() ? i : oa[i]], x1[ob.empty() ? i : ob[i]]);
  }
  return make_result(op, std::move(out), std::move(y), {&a, &b},
                     [oa = std::move(oa), ob = std::move(ob), da, db](Node& self) {
                       const double* g = self.grad.data();
                       const double* x0 = self.inputs[0]->data.data();
                       const double* x1 = self.inputs[1]->data.data();
                       double* g0 = grad_of(self, 0);
                       double* g1 = grad_of(self, 1);
                       const std::size_t n = self.data.size();
                       for (std::size_t i = 0; i < n; ++i) {
                         const std::size_t i0 = oa.empty() ? i : oa[i];
                         const std::size_t i1 = ob.empty() ? i : ob[i];
                         if (g0) g0[i0] += g[i] * da(x0[i0], x1[i1], self.data[i]);
                         if (g1) g1[i1] += g[i] * db(x0[i0], x1[i1], self.data[i]);
                       }
                     });
}

// dfdx receives (x, y) and returns dy/dx.
template <class F, class D>
Var unary(const char* op, const Var& a, F f, D dfdx) {
  require_defined(op, a);
  const std::size_t n = a.numel();
  std::vector<double> y(n);
  const double* x = a.data().data();
  for (std::size_t i = 0; i < n; ++i) y[i] = f(x[i]);
  return make_result(op, a.shape(), std::move(y), {&a}, [dfdx](Node& self) {
    double* g0 = grad_of(self, 0);
    if (!g0) return;
    const double* x = self.inputs[0]->data.data();
    const double* g = self.grad.data();
    for (std::size_t i = 0; i < self.data.size(); ++i) g0[i] += g[i] * dfdx(x[i], self.data[i]);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// outer x axis x inner decomposition of a shape around one axis.
struct AxisSplit {
  std::size_t outer = 1, dim = 1, inner = 1;
};

AxisSplit split_axis(const char* op, const Shape& s, std::size_t axis) {
  if (axis >= s.rank()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                     s.str());
  }
  AxisSplit sp;
  for (std::size_t i = 0; i < axis; ++i) sp.outer *= s[i];
  sp.dim = s[axis];
  for (std::size_t i = axis + 1; i < s.rank(); ++i) sp.inner *= s[i];
  return sp;
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Var sub(const Var& a, const Var& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Var mul(const Var& a, const Var& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Var div(const Var& a, const Var& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double out) { return -out / y; });
}

Var broadcast_to(const Var& a, const Shape& shape) {
  require_defined("broadcast_to", a);
  if (broadcast_shape("broadcast_to", a.shape(), shape) != shape) {
    shape_mismatch("broadcast_to", a.shape(), shape);
  }
  auto off = broadcast_offsets(a.shape(), shape);
  std::vector<double> y(shape.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[off.empty() ? i : off[i]];
  return make_result("broadcast_to", shape, std::move(y), {&a}, [off = std::move(off)](Node& self) {
    double* g0 = grad_of(self, 0);
    if (!g0) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) g0[off.empty() ? i : off[i]] += self.grad[i];
  });
}

Var neg(const Var& a) {
  return unary(
      "neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var scale(const Var& a, double s) {
  return unary(
      "scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
  return unary(
      "add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var square(const Var& a) {
  return unary(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var tanh(const Var& a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
  return unary("sigmoid", a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var relu(const Var& a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var exp(const Var& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var softplus(const Var& a) {
  return unary("softplus", a, stable_softplus, [](double x, double) { return stable_sigmoid(x); });
}

Var matmul(const Var& a, const Var& b) {
  require_defined("matmul", a);
  require_defined("matmul", b);
  if (a.shape().rank() != 2 || b.shape().rank() != 2 || a.shape()[1] != b.shape()[0]) {
    shape_mismatch("matmul", a.shape(), b.shape());
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> y(m * n, 0.0);
  kernels::active().gemm_nn(a.data().data(), b.data().data(), y.data(), m, k, n);
  return make_result("matmul", Shape{m, n}, std::move(y), {&a, &b}, [m, k, n](Node& self) {
    const auto& kt = kernels::active();
    const double* g = self.grad.data();
    if (double* ga = grad_of(self, 0)) kt.gemm_nt(g, self.inputs[1]->data.data(), ga, m, n, k);
    if (double* gb = grad_of(self, 1)) kt.gemm_tn(self.inputs[0]->data.data(), g, gb, m, k, n);
  });
}

Var transpose(const Var& a) {
  require_defined("transpose", a);
  if (a.shape().rank() != 2) throw ShapeError("transpose: expected rank 2, got " + a.shape().str());
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  std::vector<double> y(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[j * r + i] = a[i * c + j];
  return make_result("transpose", Shape{c, r}, std::move(y), {&a}, [r, c](Node& self) {
    double* g0 = grad_of(self, 0);
    if (!g0) return;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g0[i * c + j] += self.grad[j * r + i];
  });
}

Var conv1d(const Var& x, const Var& w, const Var& bias) {
  require_defined("conv1d", x);
  require_defined("conv1d", w);
  if (x.shape().rank() != 2 || w.shape().rank() != 3 || w.shape()[1] != x.shape()[1]) {
    shape_mismatch("conv1d", x.shape(), w.shape());
  }
  const std::size_t T = x.shape()[0], cin = x.shape()[1];
  const std::size_t K = w.shape()[0], cout = w.shape()[2];
  if (K % 2 == 0) throw ShapeError("conv1d: kernel width must be odd, got " + std::to_string(K));
  if (T < K) {
    throw ShapeError("conv1d: sequence length " + std::to_string(T) + " is shorter than kernel width " +
                     std::to_string(K));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != cout) shape_mismatch("conv1d(bias)", bias.shape(), w.shape());
  const long pad = static_cast<long>(K / 2);
  std::vector<double> y(T * cout, 0.0);
  const auto& kt = kernels::active();
  for (std::size_t k = 0; k < K; ++k) {
    const long s = static_cast<long>(k) - pad;
    const std::size_t t0 = static_cast<std::size_t>(std::max(0L, -s));
    const std::size_t t1 = static_cast<std::size_t>(std::min<long>(static_cast<long>(T), static_cast<long>(T) - s));
    if (t1 <= t0) continue;
    kt.gemm_nn(x.data().data() + (t0 + s) * cin, w.data().data() + k * cin * cout, y.data() + t0 * cout,
               t1 - t0, cin, cout);
  }
  if (has_bias) {
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < cout; ++c) y[t * cout + c] += bias[c];
  }
  Var b = has_bias ? bias : constant_fill(Shape{cout}, 0.0);
  return make_result("conv1d", Shape{T, cout}, std::move(y), {&x, &w, &b},
                     [T, cin, K, cout, pad, has_bias](Node& self) {
                       const auto& kt = kernels::active();
                       const double* g = self.grad.data();
                       const double* xd = self.inputs[0]->data.data();
                       const double* wd = self.inputs[1]->data.data();
                       double* gx = grad_of(self, 0);
                       double* gw = grad_of(self, 1);
                       double* gb = has_bias ? grad_of(self, 2) : nullptr;
                       for (std::size_t k = 0; k < K; ++k) {
                         const long s = static_cast<long>(k) - pad;
                         const std::size_t t0 = static_cast<std::size_t>(std::max(0L, -s));
                         const std::size_t t1 = static_cast<std::size_t>(
                             std::min<long>(static_cast<long>(T), static_cast<long>(T) - s));
                         if (t1 <= t0) continue;
                         const std::size_t rows = t1 - t0;
                         if (gx) kt.gemm_nt(g + t0 * cout, wd + k * cin * cout, gx + (t0 + s) * cin, rows, cout, cin);
                         if (gw) kt.gemm_tn(xd + (t0 + s) * cin, g + t0 * cout, gw + k * cin * cout, rows, cin, cout);
                       }
                       if (gb) {
                         for (std::size_t t = 0; t < T; ++t)
                           for (std::size_t c = 0; c < cout; ++c) gb[c] += g[t * cout + c];
                       }
                     });
}

Var softmax(const Var& a) {
  require_defined("softmax", a);
  const std::size_t cols = a.shape()[a.shape().rank() - 1];
  const std::size_t rows = a.numel() / cols;
  std::vector<double> y(a.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = a.data().data() + r * cols;
    double* o = y.data() + r * cols;
    const double mx = *std::max_element(x, x + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += (o[c] = std::exp(x[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) o[c] /= z;
  }
  return make_result("softmax", a.shape(), std::move(y), {&a}, [rows, cols](Node& self) {
    double* g0 = grad_of(self, 0);
    if (!g0) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* yv = self.data.data() + r * cols;
      const double* g = self.grad.data() + r * cols;
      double dotp = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dotp += g[c] * yv[c];
      for (std::size_t c = 0; c < cols; ++c) g0[r * cols + c] += yv[c] * (g[c] - dotp);
    }
  });
}

Var log_softmax(const Var& a) {
  require_defined("log_softmax", a);
  const std::size_t cols = a.shape()[a.shape().rank() - 1];
  const std::size_t rows = a.numel() / cols;
  std::vector<double> y(a.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = a.data().data() + r * cols;
    const double mx = *std::max_element(x, x + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(x[c] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] = x[c] - lse;
  }
  return make_result("log_softmax", a.shape(), std::move(y), {&a}, [rows, cols](Node& self) {
    double* g0 = grad_of(self, 0);
    if (!g0) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* yv = self.data.data() + r * cols;
      const double* g = self.grad.data() + r * cols;
      double gs = 0.0;
      for (std::size_t c = 0; c < cols; ++c) gs += g[c];
      for (std::size_t c = 0; c < cols; ++c) g0[r * cols + c] += g[c] - std::exp(yv[c]) * gs;
    }
  });
}

Var sum(const Var& a) {
  require_defined("sum", a);
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result("sum", Shape{1}, {s}, {&a}, [](Node& self) {
    double* g0 = grad_of(self, 0);
    if (!g0) return;
    const double g = self.grad[0];
    for (std::size_t i = 0; i < self.inputs[0]->data.size(); ++i) g0[i] += g;
  });
}

Var mean(const Var& a) {
  require_defined("mean", a);
  const double n = static_cast<double>(a.numel());
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result("mean", Shape{1}, {s / n}, {&a}, [n](Node& self) {
    double* g0 = grad_of(self, 0);
    if (!g0) return;
    const double g = self.grad[0] / n;
    for (std::size_t i = 0; i < self.inputs[0]->data.size(); ++i) g0[i] += g;
  });
}

Var sum(const Var& a, std::size_t axis) {
  require_defined("sum(axis)", a);
  const AxisSplit sp = split_axis("sum(axis)", a.shape(), axis);
  std::vector<std::size_t> dims;
  for (std::size_t i = 0; i < a.shape().rank(); ++i)
    if (i != axis) dims.push_back(a.shape()[i]);
  if (dims.empty()) dims.push_back(1);
  std::vector<double> y(sp.outer * sp.inner, 0.0);
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t d = 0; d < sp.dim; ++d)
      for (std::size_t i = 0; i < sp.inner; ++i)
        y[o * sp.inner + i] += a[(o * sp.dim + d) * sp.inner + i];
  return make_result("sum(axis)", Shape(std::move(dims)), std::move(y), {&a}, [sp](Node& self) {
    double* g0 = grad_of(self, 0);
    if (!g0) return;
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t d = 0; d < sp.dim; ++d)
        for (std::size_t i = 0; i < sp.inner; ++i)
          g0[(o * sp.dim + d) * sp.inner + i] += self.grad[o * sp.inner + i];
  });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  for (const Var& p : parts) require_defined("concat", p);
  const Shape& first = parts.front().shape();
  std::vector<std::size_t> dims = first.dims();
  split_axis("concat", first, axis);
  std::size_t total = 0;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    if (s.rank() != first.rank()) shape_mismatch("concat", first, s);
    for (std::size_t i = 0; i < s.rank(); ++i)
      if (i != axis && s[i] != first[i]) shape_mismatch("concat", first, s);
    total += s[axis];
  }
  dims[axis] = total;
  Shape out(dims);
  const AxisSplit sp = split_axis("concat", out, axis);
  std::vector<double> y(out.numel());
  std::vector<std::size_t> widths;
  std::size_t at = 0;
  for (const Var& p : parts) {
    const std::size_t w = p.shape()[axis] * sp.inner;
    for (std::size_t o = 0; o < sp.outer; ++o)
      std::copy_n(p.data().data() + o * w, w, y.data() + o * sp.dim * sp.inner + at);
    widths.push_back(w);
    at += w;
  }
  return make_result_n("concat", std::move(out), std::move(y), parts,
                       [widths = std::move(widths), sp](Node& self) {
                         std::size_t at = 0;
                         for (std::size_t k = 0; k < widths.size(); ++k) {
                           const std::size_t w = widths[k];
                           if (double* gk = grad_of(self, k)) {
                             for (std::size_t o = 0; o < sp.outer; ++o) {
                               const double* src = self.grad.data() + o * sp.dim * sp.inner + at;
                               for (std::size_t j = 0; j < w; ++j) gk[o * w + j] += src[j];
                             }
                           }
                           at += w;
                         }
                       });
}

Var concat(std::initializer_list<Var> parts, std::size_t axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t end) {
  require_defined("slice", a);
  const AxisSplit sp = split_axis("slice", a.shape(), axis);
  if (begin >= end || end > sp.dim) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for axis " + std::to_string(axis) + " of " + a.shape().str());
  }
  std::vector<std::size_t> dims = a.shape().dims();
  dims[axis] = end - begin;
  const std::size_t w = (end - begin) * sp.inner;
  std::vector<double> y(sp.outer * w);
  for (std::size_t o = 0; o < sp.outer; ++o)
    std::copy_n(a.data().data() + (o * sp.dim + begin) * sp.inner, w, y.data() + o * w);
  return make_result("slice", Shape(std::move(dims)), std::move(y), {&a}, [sp, begin, w](Node& self) {
    double* g0 = grad_of(self, 0);
    if (!g0) return;
    for (std::size_t o = 0; o < sp.outer; ++o) {
      double* dst = g0 + (o * sp.dim + begin) * sp.inner;
      const double* src = self.grad.data() + o * w;
      for (std::size_t j = 0; j < w; ++j) dst[j] += src[j];
    }
  });
}

Var reshape(const Var& a, const Shape& shape) {
  require_defined("reshape", a);
  if (shape.numel() != a.numel()) shape_mismatch("reshape", a.shape(), shape);
  std::vector<double> y(a.data().begin(), a.data().end());
  return make_result("reshape", shape, std::move(y), {&a}, [](Node& self) {
    double* g0 = grad_of(self, 0);
    if (!g0) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) g0[i] += self.grad[i];
  });
}

Var gather_rows(const Var& table, std::span<const int> indices) {
  require_defined("gather_rows", table);
  if (table.shape().rank() != 2) {
    throw ShapeError("gather_rows: table must be rank 2, got " + table.shape().str());
  }
  if (indices.empty()) throw ShapeError("gather_rows: empty index list");
  const std::size_t rows = table.shape()[0], d = table.shape()[1];
  std::vector<int> idx(indices.begin(), indices.end());
  std::vector<double> y(idx.size() * d);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= rows) {
      throw ShapeError("gather_rows: index " + std::to_string(idx[i]) + " out of range for table " +
                       table.shape().str());
    }
    std::copy_n(table.data().data() + static_cast<std::size_t>(idx[i]) * d, d, y.data() + i * d);
  }
  const std::size_t n = idx.size();
  return make_result("gather_rows", Shape{n, d}, std::move(y), {&table},
                     [idx = std::move(idx), d](Node& self) {
                       double* g0 = grad_of(self, 0);
                       if (!g0) return;
                       for (std::size_t i = 0; i < idx.size(); ++i)
                         for (std::size_t j = 0; j < d; ++j)
                           g0[static_cast<std::size_t>(idx[i]) * d + j] += self.grad[i * d + j];
                     });
}

}  // namespace ietts::ad
