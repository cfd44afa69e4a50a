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

#include "ietts/eval.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "ietts/error.hpp"

namespace ietts::eval {

using nlohmann::ordered_json;

void ConfusionMatrix::add(int truth, int predicted) {
  const auto e = static_cast<int>(emotions);
  if (truth < 0 || truth >= e || predicted < 0 || predicted >= e) {
    throw std::out_of_range("confusion: label pair (" + std::to_string(truth) + ", " + std::to_string(predicted) +
                            ") outside [0, " + std::to_string(e) + ")");
  }
  ++counts[static_cast<std::size_t>(truth) * emotions + static_cast<std::size_t>(predicted)];
}

std::uint64_t ConfusionMatrix::row_total(std::size_t truth) const {
  std::uint64_t n = 0;
  for (std::size_t p = 0; p < emotions; ++p) n += at(truth, p);
  return n;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

std::vector<double> ConfusionMatrix::normalized() const {
  std::vector<double> out(counts.size(), 0.0);
  for (std::size_t t = 0; t < emotions; ++t) {
    const auto n = row_total(t);
    if (n == 0) continue;
    for (std::size_t p = 0; p < emotions; ++p) out[t * emotions + p] = static_cast<double>(at(t, p)) / static_cast<double>(n);
  }
  return out;
}

double ConfusionMatrix::accuracy() const {
  const auto n = total();
  if (n == 0) return 0.0;
  std::uint64_t tr = 0;
  for (std::size_t e = 0; e < emotions; ++e) tr += at(e, e);
  return static_cast<double>(tr) / static_cast<double>(n);
}

std::vector<double> ConfusionMatrix::per_emotion_accuracy() const {
  std::vector<double> out(emotions, 0.0);
  for (std::size_t e = 0; e < emotions; ++e) {
    const auto n = row_total(e);
    if (n > 0) out[e] = static_cast<double>(at(e, e)) / static_cast<double>(n);
  }
  return out;
}

TokenWeightProfile build_token_profile(const agent::Agent& agent, const std::vector<corpus::Utterance>& items) {
  const std::size_t E = agent.hyper().emotions;
  TokenWeightProfile p;
  p.rows.assign(E, std::vector<double>(E, 0.0));
  std::vector<std::size_t> n(E, 0);
  ad::NoGradGuard guard;
  for (const auto& u : items) {
    if (u.label < 0 || static_cast<std::size_t>(u.label) >= E) {
      throw std::invalid_argument("token profile: label " + std::to_string(u.label) + " outside the token bank");
    }
    const auto w = agent.reference_to_embedding(u.features).weights;
    auto& row = p.rows[static_cast<std::size_t>(u.label)];
    for (std::size_t k = 0; k < E; ++k) row[k] += w[k];
    ++n[static_cast<std::size_t>(u.label)];
  }
  for (std::size_t e = 0; e < E; ++e) {
    if (n[e] == 0) throw std::invalid_argument("token profile: emotion " + std::to_string(e) + " has no test item");
    for (double& v : p.rows[e]) v /= static_cast<double>(n[e]);
  }
  return p;
}

EmotionAccuracy evaluate_emotion_accuracy(const agent::Agent& agent, const ser::SerModel& ser,
                                          const TokenWeightProfile& profile,
                                          const std::vector<corpus::Utterance>& items) {
  const std::size_t E = ser.hyper().emotions;
  EmotionAccuracy out;
  out.confusion = ConfusionMatrix(E);
  for (const auto& u : items) {
    const auto y = agent.synthesize(u.text, profile.rows.at(static_cast<std::size_t>(u.label)));
    // Too short for the classifier's front end: counts as a miss on the
    // next label so the row total stays exact.
    const int pred = y.frames >= ser.hyper().kernel ? ser.predict(y) : (u.label + 1) % static_cast<int>(E);
    out.confusion.add(u.label, pred);
  }
  out.per_emotion = out.confusion.per_emotion_accuracy();
  out.average = out.confusion.accuracy();
  return out;
}

std::uint64_t test_set_hash(const std::vector<corpus::Utterance>& items) {
  std::uint64_t h = fnv1a(std::string_view("test-set"));
  for (const auto& u : items) {
    std::string s;
    for (int t : u.text) s += std::to_string(t) + ",";
    s += "|" + std::to_string(u.label) + ";";
    h = fnv1a(s, h);
  }
  return h;
}

Report make_report(const agent::Agent& agent, const ser::SerModel& ser, const corpus::Corpus& corpus,
                   std::string regime, std::uint64_t seed) {
  Report r;
  r.regime = std::move(regime);
  r.seed = seed;
  r.token_profile = build_token_profile(agent, corpus.test);
  const EmotionAccuracy acc = evaluate_emotion_accuracy(agent, ser, r.token_profile, corpus.test);
  r.per_emotion_accuracy = acc.per_emotion;
  r.average_accuracy = acc.average;
  r.confusion = acc.confusion;
  r.test_set_hash = test_set_hash(corpus.test);
  r.ser_checksum = ser.params().checksum();
  r.theta_checksum = agent.params().checksum();
  return r;
}

namespace {

std::vector<std::vector<double>> square(const std::vector<double>& flat, std::size_t e) {
  std::vector<std::vector<double>> out(e);
  for (std::size_t i = 0; i < e; ++i) out[i].assign(flat.begin() + static_cast<std::ptrdiff_t>(i * e),
                                                    flat.begin() + static_cast<std::ptrdiff_t>((i + 1) * e));
  return out;
}

std::string hex(std::uint64_t v) {
  std::ostringstream o;
  o << std::hex << v;
  return o.str();
}

std::uint64_t unhex(const std::string& s) {
  std::size_t used = 0;
  const auto v = std::stoull(s, &used, 16);
  if (used != s.size()) throw std::invalid_argument("bad hex");
  return v;
}

}  // namespace

std::string report_json(const Report& r) {
  const std::size_t E = r.confusion.emotions;
  ordered_json j;
  j["regime"] = r.regime;
  j["seed"] = r.seed;
  j["per_emotion_accuracy"] = r.per_emotion_accuracy;
  j["average_accuracy"] = r.average_accuracy;
  std::vector<std::vector<std::uint64_t>> counts(E);
  for (std::size_t t = 0; t < E; ++t) {
    for (std::size_t p = 0; p < E; ++p) counts[t].push_back(r.confusion.at(t, p));
  }
  j["confusion_counts"] = counts;
  j["confusion_normalized"] = square(r.confusion.normalized(), E);
  j["token_profile"] = r.token_profile.rows;
  j["emotion_names"] = std::vector<std::string>(corpus::kEmotionNames.begin(),
                                                corpus::kEmotionNames.begin() + static_cast<std::ptrdiff_t>(
                                                    std::min<std::size_t>(E, corpus::kEmotionNames.size())));
  j["test_set_hash"] = hex(r.test_set_hash);
  j["ser_checksum"] = hex(r.ser_checksum);
  j["theta_checksum"] = hex(r.theta_checksum);
  return j.dump(2) + "\n";
}

Report parse_report(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    Report r;
    r.regime = j.at("regime").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.per_emotion_accuracy = j.at("per_emotion_accuracy").get<std::vector<double>>();
    r.average_accuracy = j.at("average_accuracy").get<double>();
    const auto counts = j.at("confusion_counts").get<std::vector<std::vector<std::uint64_t>>>();
    r.confusion = ConfusionMatrix(counts.size());
    for (std::size_t t = 0; t < counts.size(); ++t) {
      if (counts[t].size() != counts.size()) throw FormatError("report: confusion_counts is not square");
      for (std::size_t p = 0; p < counts.size(); ++p) r.confusion.counts[t * counts.size() + p] = counts[t][p];
    }
    r.token_profile.rows = j.at("token_profile").get<std::vector<std::vector<double>>>();
    r.test_set_hash = unhex(j.at("test_set_hash").get<std::string>());
    r.ser_checksum = unhex(j.at("ser_checksum").get<std::string>());
    r.theta_checksum = unhex(j.at("theta_checksum").get<std::string>());
    return r;
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
}

void save_report(const Report& r, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot open '" + path.string() + "' for writing");
  f << report_json(r);
  if (!f) throw Error("failed writing '" + path.string() + "'");
}

Report load_report(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open report '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_report(ss.str());
}

std::string confusion_csv(const ConfusionMatrix& m) {
  std::ostringstream o;
  o << "truth";
  auto name = [](std::size_t e) {
    return e < corpus::kEmotionNames.size() ? std::string(corpus::kEmotionNames[e]) : std::to_string(e);
  };
  for (std::size_t p = 0; p < m.emotions; ++p) o << ',' << name(p);
  o << '\n';
  for (std::size_t t = 0; t < m.emotions; ++t) {
    o << name(t);
    for (std::size_t p = 0; p < m.emotions; ++p) o << ',' << m.at(t, p);
    o << '\n';
  }
  return o.str();
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of an empty list");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

RegimeComparison compare_regimes(std::span<const Report> baseline, std::span<const Report> candidate) {
  if (baseline.empty() || candidate.empty()) throw std::invalid_argument("compare_regimes: empty report list");
  const Report& ref = baseline.front();
  const std::size_t E = ref.per_emotion_accuracy.size();
  for (const auto* list : {&baseline, &candidate}) {
    for (const Report& r : *list) {
      if (r.test_set_hash != ref.test_set_hash) throw std::invalid_argument("compare_regimes: reports use different test sets");
      if (r.ser_checksum != ref.ser_checksum) throw std::invalid_argument("compare_regimes: reports use different classifiers");
      if (r.per_emotion_accuracy.size() != E) throw std::invalid_argument("compare_regimes: emotion counts differ");
    }
  }
  RegimeComparison c;
  auto medians = [E](std::span<const Report> rs, std::vector<double>& per, std::vector<double>& avgs) {
    for (std::size_t e = 0; e < E; ++e) {
      std::vector<double> v;
      for (const auto& r : rs) v.push_back(r.per_emotion_accuracy[e]);
      per.push_back(median(v));
    }
    for (const auto& r : rs) avgs.push_back(r.average_accuracy);
    return median(avgs);
  };
  c.baseline_median_average = medians(baseline, c.baseline_median_per_emotion, c.baseline_averages);
  c.candidate_median_average = medians(candidate, c.candidate_median_per_emotion, c.candidate_averages);
  for (std::size_t e = 0; e < E; ++e) {
    c.delta_per_emotion.push_back(c.candidate_median_per_emotion[e] - c.baseline_median_per_emotion[e]);
  }
  c.delta_average = c.candidate_median_average - c.baseline_median_average;
  return c;
}

std::string comparison_json(const RegimeComparison& c) {
  ordered_json j;
  j["baseline_median_per_emotion"] = c.baseline_median_per_emotion;
  j["candidate_median_per_emotion"] = c.candidate_median_per_emotion;
  j["delta_per_emotion"] = c.delta_per_emotion;
  j["baseline_median_average"] = c.baseline_median_average;
  j["candidate_median_average"] = c.candidate_median_average;
  j["delta_average"] = c.delta_average;
  j["baseline_averages"] = c.baseline_averages;
  j["candidate_averages"] = c.candidate_averages;
  return j.dump(2) + "\n";
}

}  // namespace ietts::eval
