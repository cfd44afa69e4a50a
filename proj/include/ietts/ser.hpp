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

// Emotion classifier used as the reward provider:
//   conv1d(relu) -> bidirectional gated recurrence -> attention pooling
//   -> linear -> softmax.

#pragma once

#include <cstdint>
#include <vector>

#include "ietts/corpus.hpp"
#include "ietts/nn.hpp"

namespace ietts::ser {

struct SerHyper {
  std::size_t channels = 8;
  std::size_t conv_channels = 32;
  std::size_t kernel = 3;
  std::size_t hidden = 32;  // per direction
  std::size_t attention = 32;
  std::size_t emotions = 5;
};

struct SerOutput {
  ad::Var attention;  // [1 x T]
  ad::Var logits;     // [1 x E]
  ad::Var probs;      // [1 x E]
};

class SerModel {
 public:
  SerModel() = default;
  SerModel(const SerHyper& hyper, Rng& rng);
  // All parameters zero.
  static SerModel zeros(const SerHyper& hyper);

  const SerHyper& hyper() const { return hyper_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

  // Differentiable w.r.t. the parameters and y. Throws ShapeError if y has
  // the wrong channel count or fewer frames than the conv kernel.
  SerOutput forward(const ad::Var& y) const;

  // Graph-free evaluation.
  std::vector<double> posterior(const corpus::FeatureSequence& y) const;
  int predict(const corpus::FeatureSequence& y) const;
  // Probability of `label`; throws std::out_of_range if label >= E.
  double probability(const corpus::FeatureSequence& y, int label) const;

 private:
  SerHyper hyper_;
  nn::ParameterSet params_;
  nn::LayerSpec conv_, rnn_, attn_, out_;

  void build_specs();
};

struct SerTrainConfig {
  std::size_t steps = 3000;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::size_t eval_every = 250;
  // Stop as soon as validation accuracy reaches this value.
  double early_stop_accuracy = 1.0;
  // Return the parameters from the evaluation with the best validation
  // accuracy (earliest on ties) instead of the final ones.
  bool restore_best = true;
};

struct SerPretrainResult {
  SerModel model;
  std::size_t steps_run = 0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::vector<double> loss_curve;  // mean batch loss per eval interval
};

double accuracy(const SerModel& model, const std::vector<corpus::Utterance>& items);

// Cross-entropy training on the train split. Throws NumericError with the
// step index if the loss becomes non-finite.
SerPretrainResult pretrain_ser(const corpus::Corpus& corpus, const SerHyper& hyper,
                               const SerTrainConfig& cfg, std::uint64_t seed);

}  // namespace ietts::ser
