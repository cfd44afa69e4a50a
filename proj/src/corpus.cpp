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

#include "ietts/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ietts/error.hpp"
#include "ietts/rng.hpp"

namespace ietts::corpus {

Modulation modulation_for(int label) {
  if (label < 0 || label >= kMaxEmotions) {
    throw std::invalid_argument("no modulation entry for label " + std::to_string(label));
  }
  const auto& d = kModulationDirections[static_cast<std::size_t>(label)];
  return {1.6 * d[0], 0.125 + 0.1 * d[1], 1.0 + 0.6 * d[2], 2.4 * d[3]};
}

ad::Var FeatureSequence::to_constant() const {
  return ad::constant(ad::Shape{frames, channels}, values);
}

FeatureSequence FeatureSequence::from_var(const ad::Var& v) {
  if (v.shape().rank() != 2) throw ShapeError("feature sequence must be rank 2, got " + v.shape().str());
  return {v.shape()[0], v.shape()[1], std::vector<double>(v.data().begin(), v.data().end())};
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "?";
}

const std::vector<Utterance>& Corpus::split(Split s) const {
  switch (s) {
    case Split::kTrain:
      return train;
    case Split::kVal:
      return val;
    case Split::kTest:
      return test;
  }
  throw std::logic_error("bad split");
}

namespace {

double anchor(int symbol, std::size_t channel) {
  const double v = symbol + 1.0;
  const double c = static_cast<double>(channel) + 1.0;
  return 0.5 * std::sin(0.9 * v + 2.1 * c + 0.37 * v * c);
}

double round9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  double out = 0.0;
  std::from_chars(buf, buf + std::char_traits<char>::length(buf), out);
  return out;
}

void check_spec(const CorpusSpec& s) {
  auto fail = [](const std::string& m) { throw std::invalid_argument("corpus spec: " + m); };
  if (s.emotions < 2) fail("need at least 2 emotion categories (classification undefined otherwise)");
  if (s.emotions > kMaxEmotions) fail("at most " + std::to_string(kMaxEmotions) + " emotion categories supported");
  if (s.vocab < 2) fail("vocabulary size must be >= 2");
  if (s.channels < 2) fail("need at least 2 channels");
  if (s.train_per_emotion < 1 || s.val_per_emotion < 1 || s.test_per_emotion < 1) fail("split counts must be >= 1");
  if (!(s.noise >= 0.0)) fail("noise must be >= 0");
  if (s.frames_per_symbol < 1) fail("frames per symbol must be >= 1");
  if (s.min_text_len < 1 || s.max_text_len < s.min_text_len) fail("invalid text length range");
}

}  // namespace

FeatureSequence render_clean(std::span<const int> text, int label, int channels, int d) {
  if (text.empty()) throw std::invalid_argument("render_clean: empty text");
  const Modulation m = modulation_for(label);
  const std::size_t C = static_cast<std::size_t>(channels);
  const std::size_t T = text.size() * static_cast<std::size_t>(d);
  FeatureSequence y{T, C, std::vector<double>(T * C)};
  const double half = 0.5 * (d - 1);
  for (std::size_t t = 0; t < T; ++t) {
    // Position in symbol units relative to symbol centres.
    const double pos = (static_cast<double>(t) - half) / d;
    const std::size_t last = text.size() - 1;
    std::size_t k0 = 0;
    double w = 0.0;
    if (pos <= 0.0) {
      k0 = 0;
    } else if (pos >= static_cast<double>(last)) {
      k0 = last;
    } else {
      k0 = static_cast<std::size_t>(std::floor(pos));
      const double f = pos - static_cast<double>(k0);
      w = 0.5 - 0.5 * std::cos(std::numbers::pi * f);
    }
    const std::size_t k1 = std::min(k0 + 1, last);
    const double tau = T > 1 ? static_cast<double>(t) / static_cast<double>(T - 1) : 0.5;
    for (std::size_t c = 0; c < C; ++c) {
      const double base = (1.0 - w) * anchor(text[k0], c) + w * anchor(text[k1], c);
      double v = base;
      if (c == 0) {
        v += m.slope * (2.0 * tau - 1.0);
      } else if (c == 1) {
        v += std::sin(2.0 * std::numbers::pi * m.freq * static_cast<double>(t) + m.phase);
      } else {
        v *= m.gain;
      }
      y.values[t * C + c] = v;
    }
  }
  return y;
}

Corpus generate_corpus(const CorpusSpec& spec) {
  check_spec(spec);
  Corpus c;
  c.vocab = spec.vocab;
  c.channels = spec.channels;
  c.emotions = spec.emotions;
  c.seed = spec.seed;

  std::set<std::pair<std::vector<int>, int>> used;
  const std::array<std::pair<Split, int>, 3> plan{{{Split::kTrain, spec.train_per_emotion},
                                                   {Split::kVal, spec.val_per_emotion},
                                                   {Split::kTest, spec.test_per_emotion}}};
  for (const auto& [split, count] : plan) {
    auto& out = split == Split::kTrain ? c.train : split == Split::kVal ? c.val : c.test;
    for (int e = 0; e < spec.emotions; ++e) {
      for (int i = 0; i < count; ++i) {
        // Per-utterance stream so each record depends only on (seed, split, e, i).
        const std::string stream = "corpus/" + std::string(split_name(split)) + "/" + std::to_string(e) + "/" +
                                   std::to_string(i);
        Rng rng = make_rng(spec.seed, stream);
        std::uniform_int_distribution<int> len_dist(spec.min_text_len, spec.max_text_len);
        std::uniform_int_distribution<int> tok_dist(0, spec.vocab - 1);
        Utterance u;
        u.label = e;
        for (int attempt = 0;; ++attempt) {
          u.text.assign(static_cast<std::size_t>(len_dist(rng)), 0);
          for (int& tok : u.text) tok = tok_dist(rng);
          if (used.emplace(u.text, e).second) break;
          if (attempt > 1000) throw std::invalid_argument("corpus spec: cannot draw enough distinct texts");
        }
        u.features = render_clean(u.text, e, spec.channels, spec.frames_per_symbol);
        std::normal_distribution<double> noise(0.0, 1.0);
        for (double& v : u.features.values) {
          if (spec.noise > 0.0) v += spec.noise * noise(rng);
          v = round9(v);
        }
        out.push_back(std::move(u));
      }
    }
  }
  return c;
}

void validate_splits(const Corpus& c) {
  std::set<std::string> seen;
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    const auto& items = c.split(s);
    std::vector<int> counts(static_cast<std::size_t>(std::max(c.emotions, 0)), 0);
    for (const auto& u : items) {
      if (u.label < 0 || u.label >= c.emotions) {
        throw FormatError("split " + std::string(split_name(s)) + ": label " + std::to_string(u.label) +
                          " out of range");
      }
      ++counts[static_cast<std::size_t>(u.label)];
    }
    for (int e = 0; e < c.emotions; ++e) {
      if (counts[static_cast<std::size_t>(e)] == 0) {
        throw FormatError("split " + std::string(split_name(s)) + " has no utterance with emotion " +
                          std::to_string(e));
      }
      if (counts[static_cast<std::size_t>(e)] != counts[0]) {
        throw FormatError("split " + std::string(split_name(s)) + " is unbalanced: emotion " + std::to_string(e) +
                          " has " + std::to_string(counts[static_cast<std::size_t>(e)]) + " items, emotion 0 has " +
                          std::to_string(counts[0]));
      }
    }
  }
  // Disjointness: no identical record in two splits.
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    std::set<std::string> local;
    for (const auto& u : c.split(s)) {
      std::string key(reinterpret_cast<const char*>(u.text.data()), u.text.size() * sizeof(int));
      key += '|' + std::to_string(u.label) + '|' +
             std::string(reinterpret_cast<const char*>(u.features.values.data()),
                         u.features.values.size() * sizeof(double));
      if (seen.count(key)) {
        throw FormatError("split " + std::string(split_name(s)) + " repeats an utterance from an earlier split");
      }
      local.insert(std::move(key));
    }
    seen.merge(local);
  }
}

std::string serialize_corpus(const Corpus& c) {
  std::string out;
  out += "#corpus V=" + std::to_string(c.vocab) + " C=" + std::to_string(c.channels) +
         " E=" + std::to_string(c.emotions) + " seed=" + std::to_string(c.seed) + "\n";
  char buf[32];
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    out += "#split ";
    out += split_name(s);
    out += '\n';
    for (const auto& u : c.split(s)) {
      out += "x=";
      for (std::size_t i = 0; i < u.text.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(u.text[i]);
      }
      out += "|l=" + std::to_string(u.label) + "|y=";
      const auto& y = u.features;
      for (std::size_t t = 0; t < y.frames; ++t) {
        if (t) out += ';';
        for (std::size_t ch = 0; ch < y.channels; ++ch) {
          if (ch) out += ',';
          std::snprintf(buf, sizeof buf, "%.9g", y.at(t, ch));
          out += buf;
        }
      }
      out += '\n';
    }
  }
  return out;
}

void save_corpus(const Corpus& c, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open '" + path.string() + "' for writing");
  const std::string text = serialize_corpus(c);
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!os) throw Error("write to '" + path.string() + "' failed");
}

namespace {

class LineParser {
 public:
  explicit LineParser(std::size_t line) : line_(line) {}

  [[noreturn]] void fail(std::string_view field, const std::string& msg) const {
    throw FormatError("line " + std::to_string(line_) + ": field '" + std::string(field) + "': " + msg);
  }

  template <class T>
  T number(std::string_view field, std::string_view text) const {
    T v{};
    const char* b = text.data();
    const char* e = b + text.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (text.empty() || ec != std::errc() || p != e) fail(field, "invalid number '" + std::string(text) + "'");
    return v;
  }

  std::vector<std::string_view> split(std::string_view text, char sep) const {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
      const std::size_t pos = text.find(sep, start);
      parts.push_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
      if (pos == std::string_view::npos) break;
      start = pos + 1;
    }
    return parts;
  }

  std::string_view keyed(std::string_view field, std::string_view token) const {
    const std::string prefix = std::string(field) + "=";
    if (token.substr(0, prefix.size()) != prefix) fail(field, "expected '" + prefix + "...'");
    return token.substr(prefix.size());
  }

 private:
  std::size_t line_;
};

}  // namespace

Corpus parse_corpus(std::string_view text, const LoadOptions& opts) {
  if (text.empty()) throw FormatError("line 1: field 'header': empty corpus file");
  if (text.back() != '\n') {
    const std::size_t lines = static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) + 1;
    throw FormatError("line " + std::to_string(lines) + ": field 'record': truncated (missing final newline)");
  }
  Corpus c;
  std::vector<Utterance>* current = nullptr;
  std::set<std::string> splits_seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    LineParser lp(line_no);
    if (line_no == 1) {
      const auto tok = lp.split(line, ' ');
      if (tok.size() != 5 || tok[0] != "#corpus") lp.fail("header", "expected '#corpus V=<int> C=<int> E=<int> seed=<int>'");
      c.vocab = lp.number<int>("V", lp.keyed("V", tok[1]));
      c.channels = lp.number<int>("C", lp.keyed("C", tok[2]));
      c.emotions = lp.number<int>("E", lp.keyed("E", tok[3]));
      c.seed = lp.number<std::uint64_t>("seed", lp.keyed("seed", tok[4]));
      if (c.vocab < 1 || c.channels < 1 || c.emotions < 1) lp.fail("header", "V, C and E must be positive");
      continue;
    }
    if (line.substr(0, 7) == "#split ") {
      const std::string_view name = line.substr(7);
      if (name == "train") {
        current = &c.train;
      } else if (name == "val") {
        current = &c.val;
      } else if (name == "test") {
        current = &c.test;
      } else {
        lp.fail("split", "unknown split '" + std::string(name) + "'");
      }
      if (!splits_seen.insert(std::string(name)).second) lp.fail("split", "duplicate split '" + std::string(name) + "'");
      continue;
    }
    if (current == nullptr) lp.fail("split", "record before any '#split' marker");
    const auto fields = lp.split(line, '|');
    if (fields.size() != 3) lp.fail("record", "expected 'x=...|l=...|y=...'");
    Utterance u;
    for (std::string_view tok : lp.split(lp.keyed("x", fields[0]), ',')) {
      const int v = lp.number<int>("x", tok);
      if (v < 0 || v >= c.vocab) lp.fail("x", "token " + std::to_string(v) + " outside [0, " + std::to_string(c.vocab) + ")");
      u.text.push_back(v);
    }
    u.label = lp.number<int>("l", lp.keyed("l", fields[1]));
    if (u.label < 0 || u.label >= c.emotions) {
      lp.fail("l", "label " + std::to_string(u.label) + " outside [0, " + std::to_string(c.emotions) + ")");
    }
    const auto frames = lp.split(lp.keyed("y", fields[2]), ';');
    u.features.channels = static_cast<std::size_t>(c.channels);
    for (std::size_t t = 0; t < frames.size(); ++t) {
      const auto vals = lp.split(frames[t], ',');
      if (vals.size() != u.features.channels) {
        lp.fail("y", "frame " + std::to_string(t) + " has " + std::to_string(vals.size()) +
                         " channels but header says C=" + std::to_string(c.channels) + " (record " +
                         std::to_string(current->size()) + ")");
      }
      for (std::string_view v : vals) {
        const double d = lp.number<double>("y", v);
        if (!std::isfinite(d)) lp.fail("y", "non-finite value");
        u.features.values.push_back(d);
      }
    }
    u.features.frames = frames.size();
    current->push_back(std::move(u));
  }
  if (splits_seen.size() != 3) {
    throw FormatError("line " + std::to_string(line_no) + ": field 'split': file ends before all of train/val/test (truncated?)");
  }
  if (opts.require_balanced) validate_splits(c);
  return c;
}

Corpus load_corpus(const std::filesystem::path& path, const LoadOptions& opts) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open corpus file '" + path.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_corpus(ss.str(), opts);
}

std::uint64_t corpus_hash(const Corpus& c) { return fnv1a(serialize_corpus(c)); }

}  // namespace ietts::corpus
