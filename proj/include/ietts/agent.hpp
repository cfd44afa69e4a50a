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

// The generator ("agent"): text encoder, style-token reference encoder and a
// GMM-attention decoder whose output head is a diagonal Gaussian.
//
// Per decoder step j (r frames each):
//   in_j   = [prenet(prev frame) | context_{j-1} | emotion embedding]
//   h_j    = gru(in_j, h_{j-1})
//   w, d, s = softmax(.), softplus(.), exp(.) of a linear map of h_j
//   kappa_j = kappa_{j-1} + d                         (per mixture component)
//   alpha_j(u) = sum_m w_m exp(-(u - kappa_jm)^2 / (2 s_m^2)),  u = 0..Tx-1
//   context_j = alpha_j . memory
//   mu_j   = W_o [h_j | context_j] + b_o              (r x C means)
//   stop_j = w_s . [h_j | context_j] + b_s
//
// Sampled mode draws y' ~ N(mu, sigma^2) with sigma = exp(log_sigma) and
// feeds y' back; log P(y'|x) sums the Gaussian log-density over every emitted
// value. The stop decision is deterministic and does not enter log P.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ietts/corpus.hpp"
#include "ietts/nn.hpp"

namespace ietts::agent {

struct AgentHyper {
  std::size_t vocab = 16;
  std::size_t channels = 8;
  std::size_t emotions = 5;  // number of style tokens
  std::size_t embed = 16;
  std::size_t hidden = 32;   // encoder memory width (two directions of hidden/2)
  std::size_t style = 16;    // emotion embedding width
  std::size_t ref_conv = 16;
  std::size_t ref_kernel = 3;
  std::size_t ref_hidden = 32;
  std::size_t prenet = 16;
  std::size_t decoder = 64;
  std::size_t mixtures = 2;
  std::size_t reduction = 2;
  std::size_t max_frames = 192;
  // Shortest decode that may stop early; keeps outputs classifiable by a
  // conv front end of this width.
  std::size_t min_frames = 3;
  double init_sigma = 0.3;
  // Initial per-step attention advance, in symbols.
  double init_increment = 0.5;
  // Dropout on the prenet output during teacher-forced training only, so the
  // decoder cannot lean entirely on the previous ground-truth frame.
  double prenet_dropout = 0.5;

  // Throws std::invalid_argument.
  void validate() const;
};

struct EmotionEmbedding {
  ad::Var weights;  // [1 x E], on the simplex
  ad::Var vector;   // [1 x D_s] = weights . tokens
};

enum class DecodeMode { kSampled, kMean, kTeacher };

struct PolicySample {
  corpus::FeatureSequence features;  // emitted frames (y' or mu)
  corpus::FeatureSequence means;     // mu for every emitted frame
  ad::Var means_var;                 // [T x C] graph node of mu
  ad::Var stop_logits;               // [steps x 1]
  ad::Var log_prob;                  // scalar; undefined unless sampled
  std::size_t stop_frame = 0;        // number of frames emitted
  bool hit_max = false;              // stopped by max_frames
  DecodeMode mode = DecodeMode::kMean;
  // Mixture means kappa per step, steps x M.
  std::vector<std::vector<double>> attention_means;
};

struct MseLossParts {
  ad::Var total;  // mse + stop
  ad::Var mse;
  ad::Var stop;   // mean binary cross-entropy of the stop logits
};

class Agent {
 public:
  Agent() = default;
  Agent(const AgentHyper& hyper, Rng& rng);
  // Every parameter zero except log_sigma (kept at log(init_sigma)).
  static Agent zeros(const AgentHyper& hyper);

  const AgentHyper& hyper() const { return hyper_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

  double sigma() const;

  // [Tx x hidden]. Throws std::invalid_argument on empty text or a token
  // outside [0, V).
  ad::Var encode_text(std::span<const int> text) const;

  // Throws ShapeError on a channel mismatch or fewer frames than ref_kernel.
  EmotionEmbedding reference_to_embedding(const ad::Var& y_ref) const;
  EmotionEmbedding reference_to_embedding(const corpus::FeatureSequence& y_ref) const;

  // Throws std::invalid_argument if weights are not a length-E simplex
  // vector within 1e-6.
  EmotionEmbedding embedding_from_weights(std::span<const double> weights) const;

  // kTeacher needs `teacher` and runs ceil(T / r) steps fed with the ground
  // truth; kSampled needs `rng`. With `dropout` set (teacher mode only) the
  // prenet output is masked at rate prenet_dropout. Throws NumericError on
  // non-finite means.
  PolicySample decode(const ad::Var& memory, const EmotionEmbedding& emb, DecodeMode mode,
                      const corpus::FeatureSequence* teacher = nullptr, Rng* rng = nullptr,
                      Rng* dropout = nullptr) const;

  // log P(actions) under the policy with `actions` fed back as decoder
  // input, i.e. the log_prob a sampled decode records for the same frames.
  // Throws std::invalid_argument unless the frame count is a positive
  // multiple of the reduction factor.
  ad::Var log_prob_of(const ad::Var& memory, const EmotionEmbedding& emb, const corpus::FeatureSequence& actions) const;

  // Graph-free mean decode with manual token weights; the reference encoder
  // is not used.
  corpus::FeatureSequence synthesize(std::span<const int> text, std::span<const double> weights) const;
  // Graph-free mean decode conditioned on a reference sequence.
  corpus::FeatureSequence synthesize_from_reference(std::span<const int> text,
                                                    const corpus::FeatureSequence& y_ref) const;

  // Teacher-forced loss against y, conditioned on y_ref. Pass `dropout` when
  // training.
  MseLossParts mse_loss(std::span<const int> text, const corpus::FeatureSequence& y,
                        const corpus::FeatureSequence& y_ref, Rng* dropout = nullptr) const;

 private:
  AgentHyper hyper_;
  nn::ParameterSet params_;
  nn::LayerSpec embed_, enc_, ref_conv_, ref_rnn_, ref_query_, prenet_, dec_, attn_, out_, stop_;

  void build_specs();
};

// Mean squared error over the first min(T_pred, T) frames of a [T_pred x C]
// prediction.
ad::Var mse_term(const ad::Var& pred, const corpus::FeatureSequence& target);

}  // namespace ietts::agent
