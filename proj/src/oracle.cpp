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

#include "ietts/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "ietts/agent.hpp"
#include "ietts/gradcheck.hpp"
#include "ietts/nn.hpp"
#include "ietts/rl.hpp"
#include "ietts/ser.hpp"

namespace ietts::oracle {

namespace {

using ad::Shape;
using ad::Var;

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::vector<double> uniform(Rng& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

// Values in [-hi, -gap] U [gap, hi], for ops with a kink or pole at zero.
std::vector<double> away_from_zero(Rng& rng, std::size_t n, double gap, double hi) {
  auto v = uniform(rng, n, gap, hi);
  std::bernoulli_distribution sign(0.5);
  for (double& x : v) {
    if (sign(rng)) x = -x;
  }
  return v;
}

Var leaf(Shape s, std::vector<double> v) { return ad::parameter(std::move(s), std::move(v)); }
Var leaf(Rng& rng, Shape s, double lo = -1.0, double hi = 1.0) {
  const std::size_t n = s.numel();
  return leaf(std::move(s), uniform(rng, n, lo, hi));
}

Shape random_shape(Rng& rng, std::size_t max_rank = 3) {
  std::vector<std::size_t> d(pick(rng, 1, max_rank));
  for (auto& x : d) x = pick(rng, 1, 4);
  return Shape(std::move(d));
}

// Contracts the op output with fixed random weights so that every output
// element contributes a distinct term to the checked scalar.
double check(const std::function<Var()>& op, const std::vector<Var>& leaves, Rng& rng, std::size_t max_coords = 0) {
  Shape out_shape;
  {
    ad::NoGradGuard guard;
    out_shape = op().shape();
  }
  const Var w = ad::constant(out_shape, uniform(rng, out_shape.numel(), -1.0, 1.0));
  return ad::finite_difference_check_params([&] { return ad::sum(ad::mul(op(), w)); }, leaves, 1e-5, max_coords);
}

// A second operand shape that broadcasts against [r x c].
Shape broadcast_partner(Rng& rng, std::size_t r, std::size_t c) {
  switch (pick(rng, 0, 4)) {
    case 0: return Shape{r, c};
    case 1: return Shape{1, c};
    case 2: return Shape{c};
    case 3: return Shape{r, 1};
    default: return Shape{1};
  }
}

GradCase binary(std::string name, Var (*f)(const Var&, const Var&), bool positive_rhs) {
  return {std::move(name), [f, positive_rhs](Rng& rng) {
            const std::size_t r = pick(rng, 1, 4), c = pick(rng, 1, 4);
            Shape sa{r, c};
            Shape sb = broadcast_partner(rng, r, c);
            const bool swap = !positive_rhs && std::bernoulli_distribution(0.5)(rng);
            if (swap) std::swap(sa, sb);
            Var a = leaf(rng, sa);
            Var b = positive_rhs ? leaf(sb, away_from_zero(rng, sb.numel(), 0.5, 2.0)) : leaf(rng, sb);
            return check([&] { return f(a, b); }, {a, b}, rng);
          }};
}

GradCase unary(std::string name, std::function<Var(const Var&)> f, std::function<std::vector<double>(Rng&, std::size_t)> gen) {
  return {std::move(name), [f = std::move(f), gen = std::move(gen)](Rng& rng) {
            const Shape s = random_shape(rng);
            Var a = leaf(s, gen(rng, s.numel()));
            return check([&] { return f(a); }, {a}, rng);
          }};
}

std::vector<double> sym(Rng& rng, std::size_t n) { return uniform(rng, n, -2.0, 2.0); }

std::vector<GradCase> build_op_cases() {
  std::vector<GradCase> c;
  c.push_back(binary("add", [](const Var& a, const Var& b) { return ad::add(a, b); }, false));
  c.push_back(binary("sub", [](const Var& a, const Var& b) { return ad::sub(a, b); }, false));
  c.push_back(binary("mul", [](const Var& a, const Var& b) { return ad::mul(a, b); }, false));
  c.push_back(binary("div", [](const Var& a, const Var& b) { return ad::div(a, b); }, true));
  c.push_back({"broadcast_to", [](Rng& rng) {
                 const std::size_t r = pick(rng, 1, 4), c = pick(rng, 1, 4);
                 Var a = leaf(rng, broadcast_partner(rng, r, c));
                 return check([&] { return ad::broadcast_to(a, Shape{r, c}); }, {a}, rng);
               }});
  c.push_back(unary("neg", [](const Var& a) { return ad::neg(a); }, sym));
  c.push_back({"scale", [](Rng& rng) {
                 const double s = uniform(rng, 1, -3.0, 3.0)[0];
                 Var a = leaf(rng, random_shape(rng));
                 return check([&] { return ad::scale(a, s); }, {a}, rng);
               }});
  c.push_back({"add_scalar", [](Rng& rng) {
                 const double s = uniform(rng, 1, -3.0, 3.0)[0];
                 Var a = leaf(rng, random_shape(rng));
                 return check([&] { return ad::add_scalar(a, s); }, {a}, rng);
               }});
  c.push_back(unary("square", [](const Var& a) { return ad::square(a); }, sym));
  c.push_back(unary("tanh", [](const Var& a) { return ad::tanh(a); }, sym));
  c.push_back(unary("sigmoid", [](const Var& a) { return ad::sigmoid(a); }, sym));
  c.push_back(unary("relu", [](const Var& a) { return ad::relu(a); },
                    [](Rng& rng, std::size_t n) { return away_from_zero(rng, n, 0.05, 2.0); }));
  c.push_back(unary("exp", [](const Var& a) { return ad::exp(a); }, sym));
  c.push_back(unary("log", [](const Var& a) { return ad::log(a); },
                    [](Rng& rng, std::size_t n) { return uniform(rng, n, 0.3, 3.0); }));
  c.push_back(unary("softplus", [](const Var& a) { return ad::softplus(a); },
                    [](Rng& rng, std::size_t n) { return uniform(rng, n, -4.0, 4.0); }));
  c.push_back({"matmul", [](Rng& rng) {
                 const std::size_t m = pick(rng, 1, 4), k = pick(rng, 1, 5), n = pick(rng, 1, 4);
                 Var a = leaf(rng, Shape{m, k}), b = leaf(rng, Shape{k, n});
                 return check([&] { return ad::matmul(a, b); }, {a, b}, rng);
               }});
  c.push_back({"transpose", [](Rng& rng) {
                 Var a = leaf(rng, Shape{pick(rng, 1, 4), pick(rng, 1, 4)});
                 return check([&] { return ad::transpose(a); }, {a}, rng);
               }});
  c.push_back({"conv1d", [](Rng& rng) {
                 const std::size_t K = 2 * pick(rng, 0, 2) + 1, T = pick(rng, K, K + 4);
                 const std::size_t ci = pick(rng, 1, 3), co = pick(rng, 1, 3);
                 Var x = leaf(rng, Shape{T, ci}), w = leaf(rng, Shape{K, ci, co});
                 if (std::bernoulli_distribution(0.5)(rng)) {
                   Var b = leaf(rng, Shape{co});
                   return check([&] { return ad::conv1d(x, w, b); }, {x, w, b}, rng);
                 }
                 return check([&] { return ad::conv1d(x, w, Var()); }, {x, w}, rng);
               }});
  c.push_back(unary("softmax", [](const Var& a) { return ad::softmax(a); }, sym));
  c.push_back(unary("log_softmax", [](const Var& a) { return ad::log_softmax(a); }, sym));
  c.push_back(unary("sum", [](const Var& a) { return ad::sum(a); }, sym));
  c.push_back(unary("mean", [](const Var& a) { return ad::mean(a); }, sym));
  c.push_back({"sum_axis", [](Rng& rng) {
                 const Shape s = random_shape(rng);
                 const std::size_t axis = pick(rng, 0, s.rank() - 1);
                 Var a = leaf(rng, s);
                 return check([&] { return ad::sum(a, axis); }, {a}, rng);
               }});
  c.push_back({"concat", [](Rng& rng) {
                 const std::size_t axis = pick(rng, 0, 1), other = pick(rng, 1, 3);
                 std::vector<Var> parts(pick(rng, 1, 3));
                 for (Var& p : parts) {
                   const std::size_t len = pick(rng, 1, 3);
                   p = leaf(rng, axis == 0 ? Shape{len, other} : Shape{other, len});
                 }
                 return check([&] { return ad::concat(parts, axis); }, parts, rng);
               }});
  c.push_back({"slice", [](Rng& rng) {
                 const Shape s = random_shape(rng);
                 const std::size_t axis = pick(rng, 0, s.rank() - 1);
                 const std::size_t begin = pick(rng, 0, s[axis] - 1), end = pick(rng, begin + 1, s[axis]);
                 Var a = leaf(rng, s);
                 return check([&] { return ad::slice(a, axis, begin, end); }, {a}, rng);
               }});
  c.push_back({"reshape", [](Rng& rng) {
                 const std::size_t r = pick(rng, 1, 4), k = pick(rng, 1, 4);
                 Var a = leaf(rng, Shape{r * k});
                 return check([&] { return ad::reshape(a, Shape{k, r}); }, {a}, rng);
               }});
  c.push_back({"gather_rows", [](Rng& rng) {
                 const std::size_t V = pick(rng, 1, 5), D = pick(rng, 1, 4);
                 std::vector<int> idx(pick(rng, 1, 6));
                 for (int& i : idx) i = static_cast<int>(pick(rng, 0, V - 1));
                 Var t = leaf(rng, Shape{V, D});
                 return check([&] { return ad::gather_rows(t, idx); }, {t}, rng);
               }});
  return c;
}

// Moves parameters off their initial values: zero biases put ReLUs fed by a
// zero input exactly on the kink and hide bias-gradient errors.
void jitter(const nn::ParameterSet& params, Rng& rng) {
  for (const Var& v : params.vars()) {
    Var p = v;
    for (double& x : p.mutable_data()) x += uniform(rng, 1, -0.3, 0.3)[0];
  }
}

std::vector<Var> with_params(const nn::ParameterSet& p, std::vector<Var> extra = {}) {
  std::vector<Var> out(p.vars().begin(), p.vars().end());
  out.insert(out.end(), extra.begin(), extra.end());
  return out;
}

GradCase layer_case(std::string name, nn::LayerKind kind, nn::Direction dir = nn::Direction::kForward) {
  return {std::move(name), [kind, dir](Rng& rng) {
            nn::LayerSpec spec;
            spec.kind = kind;
            spec.name = "l";
            spec.in = pick(rng, 1, 4);
            spec.out = pick(rng, 1, 4);
            spec.direction = dir;
            if (kind == nn::LayerKind::kConv1d) spec.kernel = 2 * pick(rng, 0, 2) + 1;
            nn::ParameterSet params;
            nn::init_parameters(spec, rng, params);
            jitter(params, rng);
            if (kind == nn::LayerKind::kEmbedding) {
              std::vector<double> idx(pick(rng, 1, 6));
              for (double& i : idx) i = static_cast<double>(pick(rng, 0, spec.in - 1));
              const Var x = ad::constant(Shape{idx.size()}, idx);
              return check([&] { return nn::run_layer(spec, params, x); }, with_params(params), rng);
            }
            const std::size_t T = pick(rng, std::max<std::size_t>(spec.kernel, 1), spec.kernel + 4);
            const std::size_t rows = kind == nn::LayerKind::kLinear ? pick(rng, 1, 4) : T;
            Var x = leaf(rng, Shape{rows, spec.in});
            return check([&] { return nn::run_layer(spec, params, x); }, with_params(params, {x}), rng);
          }};
}

ser::SerHyper tiny_ser(Rng& rng) {
  ser::SerHyper h;
  h.channels = pick(rng, 2, 3);
  h.conv_channels = 3;
  h.kernel = 3;
  h.hidden = 3;
  h.attention = 3;
  h.emotions = pick(rng, 2, 4);
  return h;
}

agent::AgentHyper tiny_agent(Rng& rng) {
  agent::AgentHyper h;
  h.vocab = 5;
  h.channels = pick(rng, 2, 3);
  h.emotions = 3;
  h.embed = 3;
  h.hidden = 4;
  h.style = 3;
  h.ref_conv = 3;
  h.ref_kernel = 3;
  h.ref_hidden = 3;
  h.prenet = 3;
  h.decoder = 4;
  h.mixtures = 2;
  h.reduction = pick(rng, 1, 2);
  h.max_frames = 8;
  h.min_frames = 3;
  return h;
}

corpus::FeatureSequence random_sequence(Rng& rng, std::size_t frames, std::size_t channels) {
  return {frames, channels, uniform(rng, frames * channels, -1.0, 1.0)};
}

std::vector<int> random_text(Rng& rng, std::size_t vocab) {
  std::vector<int> t(pick(rng, 2, 4));
  for (int& x : t) x = static_cast<int>(pick(rng, 0, vocab - 1));
  return t;
}

constexpr std::size_t kModelProbes = 4;

std::vector<GradCase> build_model_cases() {
  std::vector<GradCase> c;
  c.push_back(layer_case("layer.embedding", nn::LayerKind::kEmbedding));
  c.push_back(layer_case("layer.linear", nn::LayerKind::kLinear));
  c.push_back(layer_case("layer.conv1d", nn::LayerKind::kConv1d));
  c.push_back(layer_case("layer.recurrent", nn::LayerKind::kRecurrent));
  c.push_back(layer_case("layer.recurrent.bidirectional", nn::LayerKind::kRecurrent, nn::Direction::kBidirectional));
  c.push_back(layer_case("layer.attention", nn::LayerKind::kAttention));
  c.push_back({"loss.classifier_cross_entropy", [](Rng& rng) {
                 const ser::SerHyper h = tiny_ser(rng);
                 const ser::SerModel m(h, rng);
                 jitter(m.params(), rng);
                 Var y = leaf(rng, Shape{pick(rng, h.kernel, h.kernel + 4), h.channels});
                 const std::size_t label = pick(rng, 0, h.emotions - 1);
                 return check([&] { return ad::neg(ad::slice(ad::log_softmax(m.forward(y).logits), 1, label, label + 1)); },
                              with_params(m.params(), {y}), rng, kModelProbes);
               }});
  c.push_back({"loss.agent_teacher_forced", [](Rng& rng) {
                 const agent::AgentHyper h = tiny_agent(rng);
                 const agent::Agent a(h, rng);
                 jitter(a.params(), rng);
                 const auto text = random_text(rng, h.vocab);
                 const auto y = random_sequence(rng, pick(rng, 2, 6), h.channels);
                 const auto ref = random_sequence(rng, pick(rng, 3, 6), h.channels);
                 return check([&] { return a.mse_loss(text, y, ref).total; }, with_params(a.params()), rng, kModelProbes);
               }});
  c.push_back({"loss.reinforce_surrogate", [](Rng& rng) {
                 const agent::AgentHyper h = tiny_agent(rng);
                 const agent::Agent a(h, rng);
                 jitter(a.params(), rng);
                 const auto text = random_text(rng, h.vocab);
                 const auto ref = random_sequence(rng, pick(rng, 3, 6), h.channels);
                 corpus::FeatureSequence actions;
                 {
                   ad::NoGradGuard guard;
                   actions = a.decode(a.encode_text(text), a.reference_to_embedding(ref), agent::DecodeMode::kSampled,
                                      nullptr, &rng)
                                 .features;
                 }
                 const double reward = uniform(rng, 1, 0.05, 1.0)[0];
                 return check(
                     [&] {
                       const Var lp = a.log_prob_of(a.encode_text(text), a.reference_to_embedding(ref), actions);
                       return rl::reinforce_surrogate(std::span<const Var>(&lp, 1), reward);
                     },
                     with_params(a.params()), rng, kModelProbes);
               }});
  return c;
}

}  // namespace

const std::vector<GradCase>& op_cases() {
  static const std::vector<GradCase> cases = build_op_cases();
  return cases;
}

const std::vector<GradCase>& model_cases() {
  static const std::vector<GradCase> cases = build_model_cases();
  return cases;
}

std::vector<GradResult> run_grad_cases(const std::vector<GradCase>& cases, std::size_t trials, std::uint64_t seed) {
  std::vector<GradResult> out;
  for (const GradCase& c : cases) {
    Rng rng = make_rng(seed, c.name);
    GradResult r{c.name, trials, 0.0};
    for (std::size_t t = 0; t < trials; ++t) r.worst = std::max(r.worst, c.trial(rng));
    out.push_back(r);
  }
  return out;
}

bool BiasSuiteResult::all_within() const {
  return std::all_of(instances.begin(), instances.end(), [](const BiasInstance& i) { return i.within; });
}

double BiasSuiteResult::max_abs_z() const {
  double m = 0.0;
  for (const auto& i : instances) m = std::max(m, i.max_abs_z);
  return m;
}

BiasSuiteResult run_bias_suite(std::size_t length, std::size_t symbols, std::size_t instances, std::size_t samples,
                               double sigmas, std::uint64_t seed) {
  BiasSuiteResult res;
  for (std::size_t k = 0; k < instances; ++k) {
    Rng rng = make_rng(seed, "bias/" + std::to_string(k));
    const auto policy = rl::DiscreteToyPolicy::random(length, symbols, rng);
    std::size_t outcomes = 1;
    for (std::size_t l = 0; l < length; ++l) outcomes *= symbols;
    const auto table = uniform(rng, outcomes, 0.0, 1.0);
    const rl::SequenceReward reward = [&table, symbols](std::span<const int> seq) {
      std::size_t idx = 0;
      for (int s : seq) idx = idx * symbols + static_cast<std::size_t>(s);
      return table[idx];
    };
    const auto rep = rl::estimator_bias_test(policy, reward, samples, rng);
    res.instances.push_back({rep.max_abs_z, rep.within(sigmas)});
  }
  return res;
}

}  // namespace ietts::oracle
