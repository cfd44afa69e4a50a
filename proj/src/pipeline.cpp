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

#include "ietts/pipeline.hpp"

#include <charconv>
#include <fstream>

#include "ietts/log.hpp"

namespace ietts::pipeline {

namespace fs = std::filesystem;

fs::path Layout::regime_checkpoint(train::Regime r) const {
  return dir / (std::string(train::regime_name(r)) + ".ckpt");
}
fs::path Layout::metrics(train::Regime r) const {
  return dir / (std::string(train::regime_name(r)) + "_metrics.jsonl");
}
fs::path Layout::report(train::Regime r) const {
  return dir / (std::string(train::regime_name(r)) + "_report.json");
}
fs::path Layout::confusion_csv(train::Regime r) const {
  return dir / (std::string(train::regime_name(r)) + "_confusion.csv");
}

namespace {

Layout layout(const config::RunConfig& cfg) { return Layout{cfg.out}; }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw Error("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw Error("failed writing '" + path.string() + "'");
}

corpus::Corpus read_corpus(const config::RunConfig& cfg) {
  const auto path = layout(cfg).corpus();
  if (!fs::exists(path)) throw Error("missing corpus '" + path.string() + "' (run gen-data first)");
  corpus::Corpus c = corpus::load_corpus(path);
  if (c.vocab != cfg.corpus.vocab || c.channels != cfg.corpus.channels || c.emotions != cfg.corpus.emotions ||
      c.seed != cfg.corpus.seed) {
    throw Error("corpus '" + path.string() + "' does not match the configured corpus spec");
  }
  return c;
}

ckpt::Checkpoint read_checkpoint(const fs::path& path, const char* hint) {
  if (!fs::exists(path)) throw Error("missing checkpoint '" + path.string() + "' (" + hint + ")");
  return ckpt::Checkpoint::load(path);
}

void check_corpus(const ckpt::Checkpoint& c, const corpus::Corpus& corpus, const fs::path& path) {
  if (c.u64_scalar("corpus_hash") != corpus::corpus_hash(corpus)) {
    throw Error("checkpoint '" + path.string() + "' was trained on a different corpus");
  }
}

ser::SerModel read_ser(const config::RunConfig& cfg, const corpus::Corpus& corpus,
                       const std::optional<fs::path>& override = std::nullopt) {
  const auto path = override.value_or(layout(cfg).ser());
  const auto c = read_checkpoint(path, "run pretrain-ser first");
  check_corpus(c, corpus, path);
  return train::load_ser(c);
}

train::LoadedAgent read_agent(const fs::path& path, const corpus::Corpus& corpus, const char* hint) {
  const auto c = read_checkpoint(path, hint);
  check_corpus(c, corpus, path);
  return train::load_agent(c);
}

}  // namespace

void write_snapshot(const config::RunConfig& cfg, const std::string& command) {
  fs::create_directories(cfg.out);
  write_text(layout(cfg).snapshot(command), config::serialize_config(cfg));
}

corpus::Corpus gen_data(const config::RunConfig& cfg) {
  fs::create_directories(cfg.out);
  corpus::Corpus c = corpus::generate_corpus(cfg.corpus);
  corpus::save_corpus(c, layout(cfg).corpus());
  log::info("corpus written to " + layout(cfg).corpus().string());
  return c;
}

ser::SerPretrainResult pretrain_ser(const config::RunConfig& cfg, const std::optional<fs::path>& out) {
  const corpus::Corpus c = read_corpus(cfg);
  auto res = ser::pretrain_ser(c, cfg.ser, cfg.ser_train, cfg.ser_seed);
  train::ser_checkpoint(res.model, corpus::corpus_hash(c)).save(out.value_or(layout(cfg).ser()));
  log::info("classifier accuracy train " + std::to_string(res.train_accuracy) + " val " +
            std::to_string(res.val_accuracy) + " test " + std::to_string(res.test_accuracy));
  return res;
}

train::PretrainResult pretrain_agent(const config::RunConfig& cfg) {
  const corpus::Corpus c = read_corpus(cfg);
  // The classifier is pretrained first; require it even though this stage
  // does not read it.
  read_ser(cfg, c);
  Rng rng = make_rng(cfg.seed, "init.agent");
  agent::Agent a(cfg.agent, rng);
  optim::Adam adam(a.params());
  auto res = train::pretrain_agent(a, adam, c, cfg.schedule, cfg.seed);
  train::agent_checkpoint(a, adam, res.steps_run, corpus::corpus_hash(c)).save(layout(cfg).pretrained());
  return res;
}

TrainOutcome train(const config::RunConfig& cfg, const std::optional<fs::path>& resume) {
  const Layout L = layout(cfg);
  const corpus::Corpus c = read_corpus(cfg);
  const ser::SerModel phi = read_ser(cfg, c);
  const train::LoadedAgent start = read_agent(L.pretrained(), c, "run pretrain-agent first");
  const train::IterativeConfig icfg = cfg.iterative_config();
  train::IterativeTrainer trainer(start.agent, start.adam, phi, c, icfg, cfg.seed, start.pretrain_steps);
  if (resume) trainer.restore(read_checkpoint(*resume, "resume checkpoint"));

  TrainOutcome out;
  out.ser_checksum_before = phi.params().checksum();
  const fs::path ckpt_path = L.regime_checkpoint(icfg.regime);
  const fs::path metrics_path = L.metrics(icfg.regime);
  {
    std::string existing;
    for (const auto& m : trainer.metrics()) existing += train::metrics_json(m) + "\n";
    write_text(metrics_path, existing);
  }
  std::ofstream metrics(metrics_path, std::ios::app);
  trainer.divergence_checkpoint = L.dir / (std::string(train::regime_name(icfg.regime)) + ".diverged.ckpt");
  trainer.on_epoch = [&](const train::EpochMetrics& m) {
    metrics << train::metrics_json(m) << "\n" << std::flush;
    trainer.checkpoint().save(ckpt_path);
  };
  trainer.run();
  trainer.checkpoint().save(ckpt_path);

  out.metrics = trainer.metrics();
  out.rl_updates = trainer.rl_updates();
  out.mse_updates = trainer.mse_updates();
  out.batches = trainer.batches();
  out.ser_checksum_after = phi.params().checksum();
  return out;
}

eval::Report evaluate(const config::RunConfig& cfg, const std::optional<fs::path>& agent_ckpt,
                      const std::optional<fs::path>& ser_ckpt) {
  const Layout L = layout(cfg);
  const corpus::Corpus c = read_corpus(cfg);
  const ser::SerModel phi = read_ser(cfg, c, ser_ckpt);
  const fs::path path = agent_ckpt.value_or(L.regime_checkpoint(cfg.train.regime));
  const train::LoadedAgent a = read_agent(path, c, "run train first or pass --ckpt");
  eval::Report r = eval::make_report(a.agent, phi, c, std::string(train::regime_name(cfg.train.regime)), cfg.seed);
  eval::save_report(r, L.report(cfg.train.regime));
  write_text(L.confusion_csv(cfg.train.regime), eval::confusion_csv(r.confusion));
  log::info("average accuracy " + std::to_string(r.average_accuracy));
  return r;
}

eval::RegimeComparison compare(const config::RunConfig& cfg, const std::vector<fs::path>& baseline,
                               const std::vector<fs::path>& candidate) {
  std::vector<eval::Report> b, k;
  for (const auto& p : baseline) b.push_back(eval::load_report(p));
  for (const auto& p : candidate) k.push_back(eval::load_report(p));
  auto cmp = eval::compare_regimes(b, k);
  fs::create_directories(cfg.out);
  write_text(layout(cfg).dir / "comparison.json", eval::comparison_json(cmp));
  return cmp;
}

corpus::FeatureSequence synthesize(const config::RunConfig& cfg, const std::optional<fs::path>& agent_ckpt,
                                   int emotion, const std::vector<int>& text) {
  const Layout L = layout(cfg);
  const corpus::Corpus c = read_corpus(cfg);
  if (emotion < 0 || emotion >= c.emotions) {
    throw std::invalid_argument("emotion " + std::to_string(emotion) + " outside [0, " + std::to_string(c.emotions) + ")");
  }
  const fs::path path = agent_ckpt.value_or(L.regime_checkpoint(cfg.train.regime));
  const train::LoadedAgent a = read_agent(path, c, "run train first or pass --ckpt");
  const auto profile = eval::build_token_profile(a.agent, c.test);
  const auto y = a.agent.synthesize(text, profile.rows[static_cast<std::size_t>(emotion)]);

  corpus::Corpus one;
  one.vocab = c.vocab;
  one.channels = c.channels;
  one.emotions = c.emotions;
  one.seed = c.seed;
  one.test.push_back({text, y, emotion});
  corpus::save_corpus(one, L.synth());
  return y;
}

std::vector<int> parse_text(std::string_view s) {
  std::vector<int> out;
  while (true) {
    const auto comma = s.find(',');
    const auto item = s.substr(0, comma);
    int v = 0;
    const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || p != item.data() + item.size()) {
      throw std::invalid_argument("text: expected comma-separated integers, got '" + std::string(item) + "'");
    }
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

}  // namespace ietts::pipeline
