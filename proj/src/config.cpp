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

#include "ietts/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace ietts::config {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_int(std::string_view key, std::string_view v) {
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw std::invalid_argument("key '" + std::string(key) + "': expected an integer, got '" + std::string(v) + "'");
  }
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  const std::string s(v);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) {
    throw std::invalid_argument("key '" + std::string(key) + "': expected a number, got '" + s + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("key '" + std::string(key) + "': expected true or false, got '" + std::string(v) + "'");
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Field {
  std::string name;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T, typename Proj>
Field int_field(std::string name, Proj proj) {
  return {name,
          [proj, name](RunConfig& c, std::string_view v) { proj(c) = parse_int<T>(name, v); },
          [proj](const RunConfig& c) { return std::to_string(proj(const_cast<RunConfig&>(c))); }};
}

template <typename Proj>
Field real_field(std::string name, Proj proj) {
  return {name,
          [proj, name](RunConfig& c, std::string_view v) { proj(c) = parse_double(name, v); },
          [proj](const RunConfig& c) { return fmt_double(proj(const_cast<RunConfig&>(c))); }};
}

template <typename Proj>
Field bool_field(std::string name, Proj proj) {
  return {name,
          [proj, name](RunConfig& c, std::string_view v) { proj(c) = parse_bool(name, v); },
          [proj](const RunConfig& c) { return std::string(proj(const_cast<RunConfig&>(c)) ? "true" : "false"); }};
}

#define IETTS_I(T, key, expr) int_field<T>(key, [](RunConfig& c) -> T& { return expr; })
#define IETTS_R(key, expr) real_field(key, [](RunConfig& c) -> double& { return expr; })
#define IETTS_B(key, expr) bool_field(key, [](RunConfig& c) -> bool& { return expr; })

const std::vector<Field>& fields() {
  using u64 = std::uint64_t;
  using sz = std::size_t;
  static const std::vector<Field> f = {
      IETTS_I(u64, "seed", c.seed),
      {"out", [](RunConfig& c, std::string_view v) { c.out = std::string(v); },
       [](const RunConfig& c) { return c.out; }},

      IETTS_I(int, "corpus.vocab", c.corpus.vocab),
      IETTS_I(int, "corpus.channels", c.corpus.channels),
      IETTS_I(int, "corpus.emotions", c.corpus.emotions),
      IETTS_I(int, "corpus.train_per_emotion", c.corpus.train_per_emotion),
      IETTS_I(int, "corpus.val_per_emotion", c.corpus.val_per_emotion),
      IETTS_I(int, "corpus.test_per_emotion", c.corpus.test_per_emotion),
      IETTS_I(u64, "corpus.seed", c.corpus.seed),
      IETTS_R("corpus.noise", c.corpus.noise),
      IETTS_I(int, "corpus.frames_per_symbol", c.corpus.frames_per_symbol),
      IETTS_I(int, "corpus.min_text_len", c.corpus.min_text_len),
      IETTS_I(int, "corpus.max_text_len", c.corpus.max_text_len),

      IETTS_I(sz, "ser.conv_channels", c.ser.conv_channels),
      IETTS_I(sz, "ser.kernel", c.ser.kernel),
      IETTS_I(sz, "ser.hidden", c.ser.hidden),
      IETTS_I(sz, "ser.attention", c.ser.attention),
      IETTS_I(sz, "ser.steps", c.ser_train.steps),
      IETTS_I(sz, "ser.batch_size", c.ser_train.batch_size),
      IETTS_R("ser.lr", c.ser_train.lr),
      IETTS_I(sz, "ser.eval_every", c.ser_train.eval_every),
      IETTS_R("ser.early_stop_accuracy", c.ser_train.early_stop_accuracy),
      IETTS_B("ser.restore_best", c.ser_train.restore_best),
      IETTS_I(u64, "ser.seed", c.ser_seed),

      IETTS_I(sz, "agent.embed", c.agent.embed),
      IETTS_I(sz, "agent.hidden", c.agent.hidden),
      IETTS_I(sz, "agent.style", c.agent.style),
      IETTS_I(sz, "agent.ref_conv", c.agent.ref_conv),
      IETTS_I(sz, "agent.ref_kernel", c.agent.ref_kernel),
      IETTS_I(sz, "agent.ref_hidden", c.agent.ref_hidden),
      IETTS_I(sz, "agent.prenet", c.agent.prenet),
      IETTS_I(sz, "agent.decoder", c.agent.decoder),
      IETTS_I(sz, "agent.mixtures", c.agent.mixtures),
      IETTS_I(sz, "agent.reduction", c.agent.reduction),
      IETTS_I(sz, "agent.max_frames", c.agent.max_frames),
      IETTS_I(sz, "agent.min_frames", c.agent.min_frames),
      IETTS_R("agent.init_sigma", c.agent.init_sigma),
      IETTS_R("agent.init_increment", c.agent.init_increment),
      IETTS_R("agent.prenet_dropout", c.agent.prenet_dropout),

      IETTS_R("reward.lambda", c.reward.lambda),
      IETTS_I(sz, "reward.k", c.reward.k),

      IETTS_R("schedule.base_lr", c.schedule.base_lr),
      IETTS_I(u64, "schedule.decay_start", c.schedule.decay_start),
      IETTS_R("schedule.floor_lr", c.schedule.floor_lr),
      IETTS_I(u64, "schedule.pretrain_steps", c.schedule.pretrain_steps),
      IETTS_I(u64, "schedule.iterative_epochs", c.schedule.iterative_epochs),
      IETTS_I(sz, "schedule.batch_size", c.schedule.batch_size),

      {"train.regime",
       [](RunConfig& c, std::string_view v) { c.train.regime = train::parse_regime(v); },
       [](const RunConfig& c) { return std::string(train::regime_name(c.train.regime)); }},
      IETTS_B("train.restart_schedule", c.train.restart_schedule),
      IETTS_I(sz, "train.convergence_window", c.train.convergence_window),
      IETTS_R("train.convergence_tolerance", c.train.convergence_tolerance),
      IETTS_I(sz, "train.min_epochs", c.train.min_epochs),
      IETTS_B("train.baseline", c.train.use_baseline),
      IETTS_R("train.baseline_decay", c.train.baseline_decay),
  };
  return f;
}

#undef IETTS_I
#undef IETTS_R
#undef IETTS_B

}  // namespace

void RunConfig::finalize() {
  if (corpus.vocab < 1 || corpus.channels < 1 || corpus.emotions < 1) {
    throw std::invalid_argument("corpus sizes must be >= 1");
  }
  ser.channels = static_cast<std::size_t>(corpus.channels);
  ser.emotions = static_cast<std::size_t>(corpus.emotions);
  agent.vocab = static_cast<std::size_t>(corpus.vocab);
  agent.channels = static_cast<std::size_t>(corpus.channels);
  agent.emotions = static_cast<std::size_t>(corpus.emotions);
  agent.validate();
  iterative_config().validate();
  if (agent.min_frames < ser.kernel) throw std::invalid_argument("agent.min_frames must be >= ser.kernel");
  if (ser.kernel % 2 == 0) throw std::invalid_argument("ser.kernel must be odd");
  if (out.empty()) throw std::invalid_argument("out must not be empty");
}

train::IterativeConfig RunConfig::iterative_config() const {
  train::IterativeConfig c = train;
  c.reward = reward;
  c.schedule = schedule;
  return c;
}

void set_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& f : fields()) {
    if (f.name == key) {
      f.set(cfg, value);
      return;
    }
  }
  throw std::invalid_argument("unknown config key '" + std::string(key) + "'");
}

std::vector<std::string> known_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.name);
  return out;
}

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view() : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw std::invalid_argument("config line " + std::to_string(line_no) + ": empty key");
    try {
      set_value(cfg, key, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  cfg.finalize();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open config '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.name + " = " + f.get(cfg) + "\n";
  return out;
}

}  // namespace ietts::config
