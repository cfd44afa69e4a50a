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

// Objective evaluation: synthesize each test text with the averaged token
// weights of its emotion, classify the result and tally a confusion matrix.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ietts/agent.hpp"
#include "ietts/corpus.hpp"
#include "ietts/ser.hpp"

namespace ietts::eval {

// Rows are truth, columns prediction.
struct ConfusionMatrix {
  std::size_t emotions = 0;
  std::vector<std::uint64_t> counts;  // E x E, row-major

  explicit ConfusionMatrix(std::size_t e = 0) : emotions(e), counts(e * e, 0) {}
  // Throws std::out_of_range on a label outside [0, E).
  void add(int truth, int predicted);
  std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts[truth * emotions + predicted]; }
  std::uint64_t row_total(std::size_t truth) const;
  std::uint64_t total() const;
  // Rows divided by their totals; an empty row stays zero.
  std::vector<double> normalized() const;
  // trace / total.
  double accuracy() const;
  std::vector<double> per_emotion_accuracy() const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

// Row e = mean style-token weights of the items labelled e.
struct TokenWeightProfile {
  std::vector<std::vector<double>> rows;
};

// Throws std::invalid_argument if an emotion has no item.
TokenWeightProfile build_token_profile(const agent::Agent& agent, const std::vector<corpus::Utterance>& items);

struct EmotionAccuracy {
  std::vector<double> per_emotion;
  double average = 0.0;  // trace / total
  ConfusionMatrix confusion;
};

EmotionAccuracy evaluate_emotion_accuracy(const agent::Agent& agent, const ser::SerModel& ser,
                                          const TokenWeightProfile& profile,
                                          const std::vector<corpus::Utterance>& items);

// Hash of the texts and labels of an item list.
std::uint64_t test_set_hash(const std::vector<corpus::Utterance>& items);

struct Report {
  std::string regime;
  std::uint64_t seed = 0;
  std::vector<double> per_emotion_accuracy;
  double average_accuracy = 0.0;
  ConfusionMatrix confusion;
  TokenWeightProfile token_profile;
  std::uint64_t test_set_hash = 0;
  std::uint64_t ser_checksum = 0;
  std::uint64_t theta_checksum = 0;
};

Report make_report(const agent::Agent& agent, const ser::SerModel& ser, const corpus::Corpus& corpus,
                   std::string regime, std::uint64_t seed);

std::string report_json(const Report& r);
// Throws FormatError on missing or malformed fields.
Report parse_report(std::string_view json);
void save_report(const Report& r, const std::filesystem::path& path);
Report load_report(const std::filesystem::path& path);
// Confusion counts as CSV with a header row of emotion names.
std::string confusion_csv(const ConfusionMatrix& m);

struct RegimeComparison {
  std::vector<double> baseline_median_per_emotion;
  std::vector<double> candidate_median_per_emotion;
  std::vector<double> delta_per_emotion;  // candidate - baseline
  double baseline_median_average = 0.0;
  double candidate_median_average = 0.0;
  double delta_average = 0.0;
  std::vector<double> baseline_averages;  // per seed, input order
  std::vector<double> candidate_averages;
};

// Medians over seeds of both regimes. Throws std::invalid_argument if a list
// is empty or the reports do not share one test set and one classifier.
RegimeComparison compare_regimes(std::span<const Report> baseline, std::span<const Report> candidate);
std::string comparison_json(const RegimeComparison& c);

double median(std::vector<double> v);

}  // namespace ietts::eval
