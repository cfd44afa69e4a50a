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

// Synthetic label-conditioned sequence corpus.
//
// Each utterance pairs a symbol sequence x with a feature sequence y of
// d frames per symbol and an emotion label l. y is built as
//
//   base(t, c)   cosine interpolation between per-symbol anchors
//                anchor(v, c) = 0.5 sin(0.9 (v+1) + 2.1 (c+1) + 0.37 (v+1)(c+1)),
//                placed at the centre frame of each symbol
//   channel 0    base + slope_l * (2 tau - 1),        tau = t / (T - 1)
//   channel 1    base + sin(2 pi freq_l t + phase_l)
//   channel >= 2 gain_l * base
//   all          + N(0, noise^2), then rounded to 9 significant digits
//
// The per-label constants come from kModulationDirections (a rotated regular
// 4-simplex, so every pair of labels is equally far apart in the normalised
// (slope, freq, gain, phase) space):
//
//   slope_l = 1.6  * dir[l][0]
//   freq_l  = 0.125 + 0.1 * dir[l][1]      cycles per frame
//   gain_l  = 1.0  + 0.6  * dir[l][2]
//   phase_l = 2.4  * dir[l][3]             radians

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ietts/autodiff.hpp"

namespace ietts::corpus {

inline constexpr int kMaxEmotions = 5;

// Rows are unit vectors; pairwise distances all equal sqrt(5/2).
inline constexpr std::array<std::array<double, 4>, kMaxEmotions> kModulationDirections{{
    {-0.01360345789537823, -0.8855960430674791, 0.06686976741264411, -0.45941596472335555},
    {0.7950021610377305, -0.03863178800047916, 0.05401862564990531, 0.6029603112843498},
    {-0.7661313254475173, -0.03760169191518724, -0.19658244332830635, 0.6107243632836494},
    {-0.13155454188640217, 0.49221366814736844, 0.8127989496550805, -0.28244818080060036},
    {0.11628716419156737, 0.46961585483577695, -0.7371048993893237, -0.47182052904404326},
}};

inline constexpr std::array<std::string_view, kMaxEmotions> kEmotionNames{
    "happy", "angry", "neutral", "sad", "surprise"};

struct Modulation {
  double slope;
  double freq;
  double gain;
  double phase;
};
Modulation modulation_for(int label);

// T x C frames, row-major.
struct FeatureSequence {
  std::size_t frames = 0;
  std::size_t channels = 0;
  std::vector<double> values;

  double at(std::size_t t, std::size_t c) const { return values[t * channels + c]; }
  std::span<const double> frame(std::size_t t) const {
    return std::span<const double>(values).subspan(t * channels, channels);
  }
  ad::Var to_constant() const;
  static FeatureSequence from_var(const ad::Var& v);

  friend bool operator==(const FeatureSequence&, const FeatureSequence&) = default;
};

struct Utterance {
  std::vector<int> text;
  FeatureSequence features;
  int label = 0;

  friend bool operator==(const Utterance&, const Utterance&) = default;
};

enum class Split { kTrain, kVal, kTest };
std::string_view split_name(Split s);

struct CorpusSpec {
  int vocab = 16;
  int channels = 8;
  int emotions = 5;
  int train_per_emotion = 60;
  int val_per_emotion = 10;
  int test_per_emotion = 10;
  std::uint64_t seed = 1;
  double noise = 0.1;
  int frames_per_symbol = 4;
  int min_text_len = 3;
  int max_text_len = 12;
};

struct Corpus {
  int vocab = 0;
  int channels = 0;
  int emotions = 0;
  std::uint64_t seed = 0;
  std::vector<Utterance> train;
  std::vector<Utterance> val;
  std::vector<Utterance> test;

  const std::vector<Utterance>& split(Split s) const;
  friend bool operator==(const Corpus&, const Corpus&) = default;
};

// Pure function of the CorpusSpec. Throws std::invalid_argument on an invalid one
// (E < 2, V < 2, counts < 1, noise < 0, ...).
Corpus generate_corpus(const CorpusSpec& spec);

// Noise-free synthesis rule for one (x, l); generate_corpus adds noise and
// rounding on top of this.
FeatureSequence render_clean(std::span<const int> text, int label, int channels, int frames_per_symbol);

// Throws FormatError if splits are missing an emotion, unbalanced, or share
// an identical utterance.
void validate_splits(const Corpus& c);

std::string serialize_corpus(const Corpus& c);
void save_corpus(const Corpus& c, const std::filesystem::path& path);

struct LoadOptions {
  // Check split balance via validate_splits (off for single-record files
  // such as synthesis outputs).
  bool require_balanced = true;
};
// Throws FormatError naming the line and field on malformed input.
Corpus parse_corpus(std::string_view text, const LoadOptions& opts = {});
Corpus load_corpus(const std::filesystem::path& path, const LoadOptions& opts = {});

std::uint64_t corpus_hash(const Corpus& c);

}  // namespace ietts::corpus
