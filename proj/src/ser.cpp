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

#include "ietts/ser.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ietts/log.hpp"
#include "ietts/optim.hpp"

namespace ietts::ser {

using ad::Var;

void SerModel::build_specs() {
  conv_ = {nn::LayerKind::kConv1d, "ser.conv", hyper_.channels, hyper_.conv_channels, hyper_.kernel};
  rnn_ = {nn::LayerKind::kRecurrent, "ser.rnn", hyper_.conv_channels, hyper_.hidden, 1, nn::Direction::kBidirectional};
  attn_ = {nn::LayerKind::kAttention, "ser.attn", 2 * hyper_.hidden, hyper_.attention};
  out_ = {nn::LayerKind::kLinear, "ser.out", 2 * hyper_.hidden, hyper_.emotions};
}

SerModel::SerModel(const SerHyper& hyper, Rng& rng) : hyper_(hyper) {
  if (hyper.emotions < 2) throw std::invalid_argument("SER needs at least 2 emotions");
  build_specs();
  for (const auto* spec : {&conv_, &rnn_, &attn_, &out_}) nn::init_parameters(*spec, rng, params_);
}

SerModel SerModel::zeros(const SerHyper& hyper) {
  Rng rng(0);
  SerModel m(hyper, rng);
  for (const auto& v : m.params_.vars()) {
    Var p = v;
    auto d = p.mutable_data();
    std::fill(d.begin(), d.end(), 0.0);
  }
  return m;
}

SerOutput SerModel::forward(const Var& y) const {
  if (y.shape().rank() != 2 || y.shape()[1] != hyper_.channels) {
    throw ShapeError("SER input must be [T x " + std::to_string(hyper_.channels) + "], got " + y.shape().str());
  }
  const Var conv = ad::relu(nn::run_layer(conv_, params_, y));
  const Var states = nn::run_layer(rnn_, params_, conv);
  const nn::AttentionPool pool = nn::attention_pool(attn_, params_, states);
  SerOutput out;
  out.attention = pool.weights;
  out.logits = nn::linear(out_, params_, pool.context);
  out.probs = ad::softmax(out.logits);
  return out;
}

std::vector<double> SerModel::posterior(const corpus::FeatureSequence& y) const {
  ad::NoGradGuard guard;
  const Var p = forward(y.to_constant()).probs;
  return {p.data().begin(), p.data().end()};
}

int SerModel::predict(const corpus::FeatureSequence& y) const {
  const auto p = posterior(y);
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

double SerModel::probability(const corpus::FeatureSequence& y, int label) const {
  if (label < 0 || static_cast<std::size_t>(label) >= hyper_.emotions) {
    throw std::out_of_range("emotion label " + std::to_string(label) + " outside [0, " +
                            std::to_string(hyper_.emotions) + ")");
  }
  return posterior(y)[static_cast<std::size_t>(label)];
}

double accuracy(const SerModel& model, const std::vector<corpus::Utterance>& items) {
  if (items.empty()) return 0.0;
  std::size_t hit = 0;
  for (const auto& u : items) hit += model.predict(u.features) == u.label ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(items.size());
}

SerPretrainResult pretrain_ser(const corpus::Corpus& corpus, const SerHyper& hyper, const SerTrainConfig& cfg,
                               std::uint64_t seed) {
  if (corpus.train.empty()) throw std::invalid_argument("SER pretraining: empty train split");
  Rng init_rng = make_rng(seed, "init.ser");
  SerPretrainResult res;
  res.model = SerModel(hyper, init_rng);
  SerModel& model = res.model;
  optim::Adam adam(model.params());
  Rng batch_rng = make_rng(seed, "batches.ser");

  std::vector<std::size_t> order(corpus.train.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  const std::size_t batch = std::min(cfg.batch_size, order.size());
  double interval_loss = 0.0;
  std::size_t interval_n = 0;
  double best_val = -1.0;
  nn::ParameterSet best;

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    model.params().zero_grad();
    double batch_loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      if (cursor >= order.size()) {
        std::shuffle(order.begin(), order.end(), batch_rng);
        cursor = 0;
      }
      const auto& u = corpus.train[order[cursor++]];
      const SerOutput out = model.forward(u.features.to_constant());
      const Var logp = ad::log_softmax(out.logits);
      const Var loss = ad::scale(ad::slice(logp, 1, static_cast<std::size_t>(u.label), static_cast<std::size_t>(u.label) + 1),
                                 -1.0 / static_cast<double>(batch));
      ad::backward(loss);
      batch_loss += loss.item();
    }
    if (!std::isfinite(batch_loss)) {
      throw NumericError("SER pretraining diverged at step " + std::to_string(step));
    }
    adam.step(model.params(), cfg.lr);
    interval_loss += batch_loss;
    ++interval_n;
    res.steps_run = step;
    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      res.loss_curve.push_back(interval_loss / static_cast<double>(interval_n));
      interval_loss = 0.0;
      interval_n = 0;
      res.val_accuracy = accuracy(model, corpus.val);
      if (cfg.restore_best && res.val_accuracy > best_val) {
        best_val = res.val_accuracy;
        best = model.params();
      }
      log::info("ser step " + std::to_string(step) + " loss " + std::to_string(res.loss_curve.back()) +
                " val_acc " + std::to_string(res.val_accuracy));
      if (res.val_accuracy >= cfg.early_stop_accuracy) break;
    }
  }
  if (cfg.restore_best && best.size() > 0) model.params().assign_values(best);
  model.params().zero_grad();
  res.train_accuracy = accuracy(model, corpus.train);
  res.val_accuracy = accuracy(model, corpus.val);
  res.test_accuracy = accuracy(model, corpus.test);
  return res;
}

}  // namespace ietts::ser
