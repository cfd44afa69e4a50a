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

// Small fixtures shared by the unit tests.

#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ietts/agent.hpp"
#include "ietts/corpus.hpp"
#include "ietts/rng.hpp"
#include "ietts/ser.hpp"

namespace ietts::testing {

inline std::vector<double> uniform(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

inline corpus::FeatureSequence random_sequence(Rng& rng, std::size_t frames, std::size_t channels) {
  return {frames, channels, uniform(rng, frames * channels)};
}

// A corpus small enough for second-scale training tests.
inline corpus::CorpusSpec tiny_corpus_spec(std::uint64_t seed = 7) {
  corpus::CorpusSpec s;
  s.vocab = 6;
  s.channels = 3;
  s.emotions = 2;
  s.train_per_emotion = 4;
  s.val_per_emotion = 2;
  s.test_per_emotion = 2;
  s.seed = seed;
  s.min_text_len = 2;
  s.max_text_len = 3;
  return s;
}

inline agent::AgentHyper tiny_agent_hyper(const corpus::CorpusSpec& s) {
  agent::AgentHyper h;
  h.vocab = static_cast<std::size_t>(s.vocab);
  h.channels = static_cast<std::size_t>(s.channels);
  h.emotions = static_cast<std::size_t>(s.emotions);
  h.embed = 4;
  h.hidden = 6;
  h.style = 4;
  h.ref_conv = 4;
  h.ref_hidden = 4;
  h.prenet = 4;
  h.decoder = 8;
  h.max_frames = static_cast<std::size_t>(4 * s.frames_per_symbol * s.max_text_len);
  return h;
}

inline ser::SerHyper tiny_ser_hyper(const corpus::CorpusSpec& s) {
  ser::SerHyper h;
  h.channels = static_cast<std::size_t>(s.channels);
  h.emotions = static_cast<std::size_t>(s.emotions);
  h.conv_channels = 4;
  h.hidden = 4;
  h.attention = 4;
  return h;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("ietts_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace ietts::testing
