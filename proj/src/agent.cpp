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

#include "ietts/agent.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace ietts::agent {

using ad::Shape;
using ad::Var;
using corpus::FeatureSequence;

void AgentHyper::validate() const {
  if (vocab < 1 || channels < 1) throw std::invalid_argument("agent: vocab and channels must be >= 1");
  if (emotions < 2) throw std::invalid_argument("agent: need at least 2 style tokens");
  if (hidden < 2 || hidden % 2 != 0) throw std::invalid_argument("agent: hidden must be even and >= 2");
  if (ref_kernel % 2 == 0) throw std::invalid_argument("agent: ref_kernel must be odd");
  if (mixtures < 1 || reduction < 1) throw std::invalid_argument("agent: mixtures and reduction must be >= 1");
  if (max_frames < reduction || max_frames % reduction != 0) {
    throw std::invalid_argument("agent: max_frames must be a positive multiple of reduction");
  }
  if (!(init_sigma > 0.0) || !(init_increment > 0.0)) {
    throw std::invalid_argument("agent: init_sigma and init_increment must be > 0");
  }
  if (!(prenet_dropout >= 0.0 && prenet_dropout < 1.0)) throw std::invalid_argument("agent: prenet_dropout must be in [0, 1)");
}

void Agent::build_specs() {
  const AgentHyper& h = hyper_;
  embed_ = {nn::LayerKind::kEmbedding, "agent.embed", h.vocab, h.embed};
  enc_ = {nn::LayerKind::kRecurrent, "agent.enc", h.embed, h.hidden / 2, 1, nn::Direction::kBidirectional};
  ref_conv_ = {nn::LayerKind::kConv1d, "agent.ref.conv", h.channels, h.ref_conv, h.ref_kernel};
  ref_rnn_ = {nn::LayerKind::kRecurrent, "agent.ref.rnn", h.ref_conv, h.ref_hidden, 1, nn::Direction::kForward};
  ref_query_ = {nn::LayerKind::kLinear, "agent.ref.query", h.ref_hidden, h.style};
  prenet_ = {nn::LayerKind::kLinear, "agent.prenet", h.channels, h.prenet};
  dec_ = {nn::LayerKind::kRecurrent, "agent.dec", h.prenet + h.hidden + h.style, h.decoder, 1,
          nn::Direction::kForward};
  attn_ = {nn::LayerKind::kLinear, "agent.attn", h.decoder, 3 * h.mixtures};
  out_ = {nn::LayerKind::kLinear, "agent.out", h.decoder + h.hidden, h.reduction * h.channels};
  stop_ = {nn::LayerKind::kLinear, "agent.stop", h.decoder + h.hidden, 1};
}

Agent::Agent(const AgentHyper& hyper, Rng& rng) : hyper_(hyper) {
  hyper_.validate();
  build_specs();
  for (const auto* spec : {&embed_, &enc_, &ref_conv_, &ref_rnn_, &ref_query_}) {
    nn::init_parameters(*spec, rng, params_);
  }
  nn::init_parameters({nn::LayerKind::kEmbedding, "agent.gst", hyper_.emotions, hyper_.style}, rng, params_);
  for (const auto* spec : {&prenet_, &dec_, &attn_, &out_, &stop_}) nn::init_parameters(*spec, rng, params_);
  params_.add("agent.log_sigma", Shape{1}, {std::log(hyper_.init_sigma)});

  // softplus(b) = init_increment for the increment logits.
  Var ab = params_.get("agent.attn.b");
  auto b = ab.mutable_data();
  const double inv = std::log(std::expm1(hyper_.init_increment));
  for (std::size_t m = 0; m < hyper_.mixtures; ++m) b[hyper_.mixtures + m] = inv;
}

Agent Agent::zeros(const AgentHyper& hyper) {
  Rng rng(0);
  Agent a(hyper, rng);
  for (const auto& v : a.params_.vars()) {
    Var p = v;
    auto d = p.mutable_data();
    std::fill(d.begin(), d.end(), 0.0);
  }
  Var ls = a.params_.get("agent.log_sigma");
  ls.mutable_data()[0] = std::log(hyper.init_sigma);
  return a;
}

double Agent::sigma() const { return std::exp(params_.get("agent.log_sigma")[0]); }

Var Agent::encode_text(std::span<const int> text) const {
  if (text.empty()) throw std::invalid_argument("encode_text: empty symbol sequence");
  for (int t : text) {
    if (t < 0 || static_cast<std::size_t>(t) >= hyper_.vocab) {
      throw std::invalid_argument("encode_text: token " + std::to_string(t) + " outside [0, " +
                                  std::to_string(hyper_.vocab) + ")");
    }
  }
  const Var emb = ad::gather_rows(params_.get("agent.embed.table"), text);
  return nn::run_recurrent(enc_, params_, emb).states;
}

EmotionEmbedding Agent::reference_to_embedding(const Var& y_ref) const {
  if (y_ref.shape().rank() != 2 || y_ref.shape()[1] != hyper_.channels) {
    throw ShapeError("reference must be [T x " + std::to_string(hyper_.channels) + "], got " + y_ref.shape().str());
  }
  const Var conv = ad::relu(nn::run_layer(ref_conv_, params_, y_ref));
  const Var summary = nn::run_recurrent(ref_rnn_, params_, conv).last_forward;
  const Var query = nn::linear(ref_query_, params_, summary);
  const Var& tokens = params_.get("agent.gst.table");
  const Var scores = ad::scale(ad::matmul(query, ad::transpose(tokens)),
                               1.0 / std::sqrt(static_cast<double>(hyper_.style)));
  EmotionEmbedding e;
  e.weights = ad::softmax(scores);
  e.vector = ad::matmul(e.weights, tokens);
  return e;
}

EmotionEmbedding Agent::reference_to_embedding(const FeatureSequence& y_ref) const {
  return reference_to_embedding(y_ref.to_constant());
}

EmotionEmbedding Agent::embedding_from_weights(std::span<const double> weights) const {
  if (weights.size() != hyper_.emotions) {
    throw std::invalid_argument("token weights: expected " + std::to_string(hyper_.emotions) + " entries, got " +
                                std::to_string(weights.size()));
  }
  double total = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < -1e-6) throw std::invalid_argument("token weights: entries must be >= 0");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-6) throw std::invalid_argument("token weights: entries must sum to 1");
  EmotionEmbedding e;
  e.weights = ad::constant(Shape{1, hyper_.emotions}, {weights.begin(), weights.end()});
  e.vector = ad::matmul(e.weights, params_.get("agent.gst.table"));
  return e;
}

PolicySample Agent::decode(const Var& memory, const EmotionEmbedding& emb, DecodeMode mode,
                           const FeatureSequence* teacher, Rng* rng, Rng* dropout) const {
  const AgentHyper& h = hyper_;
  const std::size_t C = h.channels, r = h.reduction, M = h.mixtures;
  if (mode == DecodeMode::kTeacher && teacher == nullptr) {
    throw std::invalid_argument("decode: teacher-forced mode needs a target sequence");
  }
  if (mode == DecodeMode::kSampled && rng == nullptr) throw std::invalid_argument("decode: sampled mode needs an rng");
  if (dropout != nullptr && mode != DecodeMode::kTeacher) {
    throw std::invalid_argument("decode: prenet dropout applies to teacher-forced decoding only");
  }
  if (teacher != nullptr && (teacher->channels != C || teacher->frames < 1)) {
    throw ShapeError("decode: teacher must be [T x " + std::to_string(C) + "] with T >= 1");
  }
  if (memory.shape().rank() != 2 || memory.shape()[1] != h.hidden) {
    throw ShapeError("decode: memory must be [Tx x " + std::to_string(h.hidden) + "], got " + memory.shape().str());
  }

  const std::size_t Tx = memory.shape()[0];
  std::vector<double> pos(Tx);
  for (std::size_t u = 0; u < Tx; ++u) pos[u] = static_cast<double>(u);
  const Var positions = ad::constant(Shape{1, Tx}, pos);

  const nn::GruCell cell(params_, dec_.name + ".fw");
  const Var& log_sigma = params_.get("agent.log_sigma");
  const double sigma = std::exp(log_sigma[0]);
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  std::normal_distribution<double> normal(0.0, 1.0);

  const std::size_t max_steps =
      mode == DecodeMode::kTeacher ? (teacher->frames + r - 1) / r : h.max_frames / r;

  PolicySample out;
  out.mode = mode;
  out.features.channels = C;
  out.means.channels = C;
  Var state = ad::constant_fill(Shape{1, h.decoder}, 0.0);
  Var context = ad::constant_fill(Shape{1, h.hidden}, 0.0);
  Var kappa = ad::constant_fill(Shape{1, M}, 0.0);
  std::vector<double> prev(C, 0.0);
  std::vector<Var> mus, stops, lps;

  for (std::size_t j = 0; j < max_steps; ++j) {
    Var pre = ad::relu(nn::linear(prenet_, params_, ad::constant(Shape{1, C}, prev)));
    if (dropout != nullptr && h.prenet_dropout > 0.0) {
      std::bernoulli_distribution keep(1.0 - h.prenet_dropout);
      std::vector<double> mask(h.prenet);
      for (double& m : mask) m = keep(*dropout) ? 1.0 / (1.0 - h.prenet_dropout) : 0.0;
      pre = pre * ad::constant(Shape{1, h.prenet}, mask);
    }
    state = cell.step(cell.project(ad::concat({pre, context, emb.vector}, 1)), state);

    const Var a = nn::linear(attn_, params_, state);
    const Var w = ad::reshape(ad::softmax(ad::slice(a, 1, 0, M)), Shape{M, 1});
    kappa = kappa + ad::softplus(ad::slice(a, 1, M, 2 * M));
    const Var s = ad::reshape(ad::exp(ad::slice(a, 1, 2 * M, 3 * M)), Shape{M, 1});
    const Var z = (positions - ad::reshape(kappa, Shape{M, 1})) / s;
    const Var alpha = ad::reshape(ad::sum(w * ad::exp(ad::scale(ad::square(z), -0.5)), 0), Shape{1, Tx});
    context = ad::matmul(alpha, memory);
    out.attention_means.emplace_back(kappa.data().begin(), kappa.data().end());

    const Var hc = ad::concat({state, context}, 1);
    const Var mu = nn::linear(out_, params_, hc);
    const Var stop = nn::linear(stop_, params_, hc);
    for (double v : mu.data()) {
      if (!std::isfinite(v)) throw NumericError("decode: non-finite frame mean at step " + std::to_string(j));
    }
    mus.push_back(ad::reshape(mu, Shape{r, C}));
    stops.push_back(stop);

    std::vector<double> emitted(mu.data().begin(), mu.data().end());
    if (mode == DecodeMode::kSampled) {
      for (double& v : emitted) v += sigma * normal(*rng);
      const Var diff = ad::constant(Shape{1, r * C}, emitted) - mu;
      const double n = static_cast<double>(r * C);
      lps.push_back(ad::add_scalar(ad::scale(ad::sum(ad::square(diff)) * ad::exp(ad::scale(log_sigma, -2.0)), -0.5) -
                                       ad::scale(log_sigma, n),
                                   -n * half_log_2pi));
    }
    out.means.values.insert(out.means.values.end(), mu.data().begin(), mu.data().end());
    out.features.values.insert(out.features.values.end(), emitted.begin(), emitted.end());
    const std::size_t frames = (j + 1) * r;

    if (mode == DecodeMode::kTeacher) {
      const std::size_t t = std::min(frames, teacher->frames) - 1;
      const auto f = teacher->frame(t);
      prev.assign(f.begin(), f.end());
      continue;
    }
    prev.assign(emitted.end() - static_cast<std::ptrdiff_t>(C), emitted.end());
    if (stop[0] > 0.0 && frames >= h.min_frames) break;
    if (j + 1 == max_steps) out.hit_max = true;
  }

  out.stop_frame = mus.size() * r;
  out.features.frames = out.stop_frame;
  out.means.frames = out.stop_frame;
  out.means_var = ad::concat(mus, 0);
  out.stop_logits = ad::concat(stops, 0);
  if (mode == DecodeMode::kSampled) out.log_prob = ad::sum(ad::concat(lps, 0));
  return out;
}

Var Agent::log_prob_of(const Var& memory, const EmotionEmbedding& emb, const FeatureSequence& actions) const {
  if (actions.frames == 0 || actions.frames % hyper_.reduction != 0) {
    throw std::invalid_argument("log_prob_of: frame count " + std::to_string(actions.frames) +
                                " is not a positive multiple of the reduction factor");
  }
  const PolicySample p = decode(memory, emb, DecodeMode::kTeacher, &actions);
  const Var& log_sigma = params_.get("agent.log_sigma");
  const double n = static_cast<double>(actions.values.size());
  const Var diff = actions.to_constant() - p.means_var;
  return ad::add_scalar(ad::scale(ad::sum(ad::square(diff)) * ad::exp(ad::scale(log_sigma, -2.0)), -0.5) -
                            ad::scale(log_sigma, n),
                        -0.5 * n * std::log(2.0 * std::numbers::pi));
}

FeatureSequence Agent::synthesize(std::span<const int> text, std::span<const double> weights) const {
  ad::NoGradGuard guard;
  const EmotionEmbedding e = embedding_from_weights(weights);
  return decode(encode_text(text), e, DecodeMode::kMean).features;
}

FeatureSequence Agent::synthesize_from_reference(std::span<const int> text, const FeatureSequence& y_ref) const {
  ad::NoGradGuard guard;
  const EmotionEmbedding e = reference_to_embedding(y_ref);
  return decode(encode_text(text), e, DecodeMode::kMean).features;
}

MseLossParts Agent::mse_loss(std::span<const int> text, const FeatureSequence& y, const FeatureSequence& y_ref,
                              Rng* dropout) const {
  const Var memory = encode_text(text);
  const EmotionEmbedding e = reference_to_embedding(y_ref);
  const PolicySample s = decode(memory, e, DecodeMode::kTeacher, &y, nullptr, dropout);
  const std::size_t steps = s.stop_logits.shape()[0];
  std::vector<double> target(steps, 0.0);
  target.back() = 1.0;
  const Var z = s.stop_logits;
  MseLossParts parts;
  parts.mse = mse_term(s.means_var, y);
  parts.stop = ad::mean(ad::softplus(z) - z * ad::constant(Shape{steps, 1}, target));
  parts.total = parts.mse + parts.stop;
  return parts;
}

Var mse_term(const Var& pred, const FeatureSequence& target) {
  if (pred.shape().rank() != 2 || pred.shape()[1] != target.channels) {
    throw ShapeError("mse_term: prediction " + pred.shape().str() + " does not match " +
                     std::to_string(target.channels) + " target channels");
  }
  const std::size_t n = std::min(pred.shape()[0], target.frames);
  if (n == 0) throw ShapeError("mse_term: empty target");
  const Var t = ad::constant(Shape{n, target.channels},
                             std::vector<double>(target.values.begin(),
                                                 target.values.begin() + static_cast<std::ptrdiff_t>(n * target.channels)));
  return ad::mean(ad::square(ad::slice(pred, 0, 0, n) - t));
}

}  // namespace ietts::agent
