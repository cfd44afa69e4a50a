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

// ietts: command line driver.
//
//   ietts gen-data       --config c.cfg [--out dir]
//   ietts pretrain-ser   --config c.cfg [--ckpt other_ser.ckpt]
//   ietts pretrain-agent --config c.cfg [--seed n]
//   ietts train          --config c.cfg --regime iterative [--ckpt resume.ckpt]
//   ietts eval           --config c.cfg --regime iterative [--ckpt agent.ckpt] [--ser other_ser.ckpt]
//   ietts eval           --config c.cfg --baseline a.json ... --candidate b.json ...
//   ietts synth          --config c.cfg --emotion 2 --text 3,1,4,1,5
//   ietts oracle-check   [--trials 100]

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ietts/kernels.hpp"
#include "ietts/log.hpp"
#include "ietts/oracle.hpp"
#include "ietts/pipeline.hpp"

namespace {

using namespace ietts;

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string regime;
  std::string ckpt;
};

void add_common(CLI::App* cmd, Common& c, bool regime, bool ckpt) {
  cmd->add_option("--config", c.config, "configuration file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "output directory (overrides 'out')");
  cmd->add_option("--seed", c.seed, "run seed (overrides 'seed')");
  if (regime) cmd->add_option("--regime", c.regime, "mse-only or iterative (overrides 'train.regime')");
  if (ckpt) cmd->add_option("--ckpt", c.ckpt, "checkpoint path");
}

config::RunConfig resolve(const Common& c) {
  config::RunConfig cfg = config::load_config(c.config);
  if (!c.out.empty()) cfg.out = c.out;
  if (c.seed) cfg.seed = *c.seed;
  if (!c.regime.empty()) cfg.train.regime = train::parse_regime(c.regime);
  cfg.finalize();
  return cfg;
}

std::optional<std::filesystem::path> opt_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::filesystem::path(s);
}

int oracle_check(std::size_t trials, std::size_t model_trials, std::uint64_t seed) {
  bool ok = true;
  std::printf("kernels: %s\n", std::string(kernels::isa_name(kernels::active_isa())).c_str());
  for (const auto* cases : {&oracle::op_cases(), &oracle::model_cases()}) {
    const std::size_t n = cases == &oracle::op_cases() ? trials : model_trials;
    for (const auto& r : oracle::run_grad_cases(*cases, n, seed)) {
      const bool pass = r.passed(1e-4);
      ok = ok && pass;
      std::printf("%-4s gradcheck %-32s trials %4zu  max rel err %.3e\n", pass ? "ok" : "FAIL", r.name.c_str(),
                  r.trials, r.worst);
    }
  }
  const auto bias = oracle::run_bias_suite(2, 3, 10, 100000, 3.0, seed);
  ok = ok && bias.all_within();
  std::printf("%-4s reinforce bias (10 instances, 1e5 samples)  max |z| %.3f\n", bias.all_within() ? "ok" : "FAIL",
              bias.max_abs_z());
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Emotional TTS agent trained with classifier rewards"};
  app.require_subcommand(1);

  Common gen, pser, pagent, trn, ev, syn;
  add_common(app.add_subcommand("gen-data", "generate the synthetic corpus"), gen, false, false);
  add_common(app.add_subcommand("pretrain-ser", "pretrain and freeze the emotion classifier"), pser, false, true);
  add_common(app.add_subcommand("pretrain-agent", "teacher-forced agent pretraining"), pagent, false, false);
  CLI::App* train_cmd = app.add_subcommand("train", "mse-only or iterative training from the pretrained agent");
  add_common(train_cmd, trn, true, true);

  CLI::App* eval_cmd = app.add_subcommand("eval", "classifier accuracy of synthesized test outputs");
  add_common(eval_cmd, ev, true, true);
  std::string eval_ser;
  eval_cmd->add_option("--ser", eval_ser, "score with this classifier instead of the reward classifier");
  std::vector<std::string> baseline, candidate;
  eval_cmd->add_option("--baseline", baseline, "reports of the baseline regime (compare mode)");
  eval_cmd->add_option("--candidate", candidate, "reports of the candidate regime (compare mode)");

  CLI::App* synth_cmd = app.add_subcommand("synth", "synthesize one text with an emotion");
  add_common(synth_cmd, syn, true, true);
  int emotion = 0;
  std::string text;
  synth_cmd->add_option("--emotion", emotion, "emotion index")->required();
  synth_cmd->add_option("--text", text, "comma-separated token ids")->required();

  CLI::App* oracle_cmd = app.add_subcommand("oracle-check", "gradient checks and the estimator bias test");
  std::size_t trials = 100, model_trials = 100;
  std::uint64_t oracle_seed = 1;
  oracle_cmd->add_option("--trials", trials, "randomized trials per op");
  oracle_cmd->add_option("--model-trials", model_trials, "randomized trials per layer and model loss");
  oracle_cmd->add_option("--seed", oracle_seed, "seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("gen-data")) {
      const auto cfg = resolve(gen);
      pipeline::write_snapshot(cfg, "gen-data");
      pipeline::gen_data(cfg);
    } else if (app.got_subcommand("pretrain-ser")) {
      const auto cfg = resolve(pser);
      pipeline::write_snapshot(cfg, "pretrain-ser");
      const auto r = pipeline::pretrain_ser(cfg, opt_path(pser.ckpt));
      std::printf("classifier test accuracy %.4f after %zu steps\n", r.test_accuracy, r.steps_run);
    } else if (app.got_subcommand("pretrain-agent")) {
      const auto cfg = resolve(pagent);
      pipeline::write_snapshot(cfg, "pretrain-agent");
      const auto r = pipeline::pretrain_agent(cfg);
      std::printf("agent validation loss %.6f -> %.6f after %zu steps\n", r.initial_val_loss, r.final_val_loss,
                  r.steps_run);
    } else if (app.got_subcommand("train")) {
      const auto cfg = resolve(trn);
      pipeline::write_snapshot(cfg, "train");
      const auto r = pipeline::train(cfg, opt_path(trn.ckpt));
      std::printf("%zu epochs, %llu batches, %llu rl updates, %llu mse updates\n", r.metrics.size(),
                  static_cast<unsigned long long>(r.batches), static_cast<unsigned long long>(r.rl_updates),
                  static_cast<unsigned long long>(r.mse_updates));
    } else if (app.got_subcommand("eval")) {
      const auto cfg = resolve(ev);
      pipeline::write_snapshot(cfg, "eval");
      if (!baseline.empty() || !candidate.empty()) {
        std::vector<std::filesystem::path> b(baseline.begin(), baseline.end()), c(candidate.begin(), candidate.end());
        const auto cmp = pipeline::compare(cfg, b, c);
        std::printf("median average accuracy %.4f -> %.4f (delta %+.4f)\n", cmp.baseline_median_average,
                    cmp.candidate_median_average, cmp.delta_average);
      } else {
        const auto r = pipeline::evaluate(cfg, opt_path(ev.ckpt), opt_path(eval_ser));
        std::printf("average accuracy %.4f\n", r.average_accuracy);
      }
    } else if (app.got_subcommand("synth")) {
      const auto cfg = resolve(syn);
      pipeline::write_snapshot(cfg, "synth");
      const auto y = pipeline::synthesize(cfg, opt_path(syn.ckpt), emotion, pipeline::parse_text(text));
      std::printf("%zu frames written to %s\n", y.frames, pipeline::Layout{cfg.out}.synth().string().c_str());
    } else if (app.got_subcommand("oracle-check")) {
      return oracle_check(trials, model_trials, oracle_seed);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ietts: error: %s\n", e.what());
    return 1;
  }
  return 0;
}
