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

// Runs the built command line tool end to end on a tiny configuration.

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "doctest.h"
#include "helpers.hpp"
#include "ietts/corpus.hpp"
#include "ietts/eval.hpp"

using namespace ietts;
namespace fs = std::filesystem;

namespace {

struct Result {
  int status = -1;
  std::string output;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(IETTS_CLI_PATH) + " " + args + " 2>&1";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.output.append(buf, n);
  const int st = pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

fs::path write_config(const fs::path& dir, const std::string& extra = "") {
  const fs::path cfg = dir / "run.cfg";
  std::ofstream f(cfg);
  f << "seed = 3\n"
       "out = " << (dir / "out").string() << "\n"
       "corpus.vocab = 6\ncorpus.channels = 3\ncorpus.emotions = 2\n"
       "corpus.train_per_emotion = 4\ncorpus.val_per_emotion = 2\ncorpus.test_per_emotion = 2\n"
       "corpus.min_text_len = 2\ncorpus.max_text_len = 3\n"
       "ser.conv_channels = 4\nser.hidden = 4\nser.attention = 4\nser.steps = 40\nser.batch_size = 4\n"
       "ser.eval_every = 20\n"
       "agent.embed = 4\nagent.hidden = 6\nagent.style = 4\nagent.ref_conv = 4\nagent.ref_hidden = 4\n"
       "agent.prenet = 4\nagent.decoder = 8\nagent.max_frames = 24\n"
       "reward.k = 2\nschedule.batch_size = 4\nschedule.pretrain_steps = 20\nschedule.iterative_epochs = 2\n"
    << extra;
  return cfg;
}

}  // namespace

TEST_CASE("argument errors exit nonzero with a message") {
  const auto dir = testing::scratch_dir("cli_args");
  CHECK(run("").status != 0);
  CHECK(run("frobnicate").status != 0);
  auto r = run("gen-data");
  CHECK(r.status != 0);
  CHECK(r.output.find("--config") != std::string::npos);
  r = run("gen-data --config " + (dir / "missing.cfg").string());
  CHECK(r.status != 0);
  const auto cfg = write_config(dir);
  CHECK(run("gen-data --config " + cfg.string() + " --no-such-flag").status != 0);
  r = run("pretrain-ser --config " + cfg.string());
  CHECK(r.status == 1);
  CHECK(r.output.find("gen-data") != std::string::npos);

  const auto bad = dir / "bad.cfg";
  std::ofstream(bad) << "reward.lambda = 0.5\nnot.a.key = 1\n";
  r = run("gen-data --config " + bad.string());
  CHECK(r.status == 1);
  CHECK(r.output.find("line 2") != std::string::npos);
}

TEST_CASE("gen-data is deterministic and reproducible from its snapshot") {
  const auto dir = testing::scratch_dir("cli_gen");
  const auto cfg = write_config(dir);
  REQUIRE(run("gen-data --config " + cfg.string()).status == 0);
  const std::string first = slurp(dir / "out" / "corpus.txt");
  REQUIRE(!first.empty());
  REQUIRE(run("gen-data --config " + cfg.string()).status == 0);
  CHECK(slurp(dir / "out" / "corpus.txt") == first);
  REQUIRE(run("gen-data --config " + (dir / "out" / "gen-data.cfg").string()).status == 0);
  CHECK(slurp(dir / "out" / "corpus.txt") == first);
  const auto c = corpus::load_corpus(dir / "out" / "corpus.txt");
  CHECK(c.train.size() == 8);
}

TEST_CASE("full pipeline on a tiny corpus") {
  const auto dir = testing::scratch_dir("cli_pipeline");
  const auto cfg = write_config(dir);
  const std::string c = " --config " + cfg.string();
  const fs::path out = dir / "out";
  REQUIRE(run("gen-data" + c).status == 0);
  CHECK(run("pretrain-agent" + c).status == 1);  // classifier first
  REQUIRE(run("pretrain-ser" + c).status == 0);
  REQUIRE(run("pretrain-agent" + c).status == 0);

  const std::string corpus_before = slurp(out / "corpus.txt");
  const std::string ser_before = slurp(out / "ser.ckpt");
  const std::string pre_before = slurp(out / "pretrained.ckpt");

  auto r = run("train" + c + " --regime mse-only");
  REQUIRE(r.status == 0);
  CHECK(r.output.find("0 rl updates, 4 mse updates") != std::string::npos);
  r = run("train" + c + " --regime iterative");
  REQUIRE(r.status == 0);
  CHECK(r.output.find("4 rl updates, 4 mse updates") != std::string::npos);
  REQUIRE(run("eval" + c + " --regime mse-only").status == 0);
  REQUIRE(run("eval" + c + " --regime iterative").status == 0);
  CHECK(slurp(out / "corpus.txt") == corpus_before);
  CHECK(slurp(out / "ser.ckpt") == ser_before);
  CHECK(slurp(out / "pretrained.ckpt") == pre_before);

  // Metrics: one JSON line per epoch.
  std::ifstream metrics(out / "iterative_metrics.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(metrics, line)) ++lines;
  CHECK(lines == 2);

  const auto rep = eval::load_report(out / "iterative_report.json");
  CHECK(rep.confusion.total() == 4);
  CHECK(fs::exists(out / "iterative_confusion.csv"));
  r = run("eval" + c + " --baseline " + (out / "mse-only_report.json").string() + " --candidate " +
          (out / "iterative_report.json").string());
  REQUIRE(r.status == 0);
  CHECK(fs::exists(out / "comparison.json"));

  // A second classifier with its own seed can score the same outputs.
  const std::string report = slurp(out / "iterative_report.json");
  const auto ser2 = dir / "ser2.ckpt";
  const auto cfg_ser2 = dir / "ser2.cfg";
  std::ofstream(cfg_ser2) << slurp(cfg) << "ser.seed = 7\n";
  REQUIRE(run("pretrain-ser --config " + cfg_ser2.string() + " --ckpt " + ser2.string()).status == 0);
  CHECK(slurp(out / "ser.ckpt") == ser_before);
  CHECK(slurp(ser2) != ser_before);
  REQUIRE(run("eval" + c + " --regime iterative --ser " + ser2.string()).status == 0);
  CHECK(eval::load_report(out / "iterative_report.json").confusion.total() == 4);
  CHECK(run("eval" + c + " --regime iterative --ser " + (out / "missing.ckpt").string()).status == 1);

  // Re-running training reproduces the report bit-exact.
  REQUIRE(run("train" + c + " --regime iterative").status == 0);
  REQUIRE(run("eval" + c + " --regime iterative").status == 0);
  CHECK(slurp(out / "iterative_report.json") == report);

  r = run("synth" + c + " --emotion 1 --text 3,1,4,1,5");
  REQUIRE(r.status == 0);
  const auto synth = corpus::load_corpus(out / "synth.txt", corpus::LoadOptions{false});
  REQUIRE(synth.test.size() == 1);
  CHECK(synth.test[0].text == std::vector<int>{3, 1, 4, 1, 5});
  CHECK(synth.test[0].label == 1);
  CHECK(synth.test[0].features.frames >= 3);
  CHECK(run("synth" + c + " --emotion 2 --text 1,2").status == 1);
  CHECK(run("synth" + c + " --emotion 0 --text 1,x").status == 1);
  CHECK(run("synth" + c + " --emotion 0 --text 1,9").status == 1);

  // Incompatible checkpoints are refused.
  r = run("eval" + c + " --ckpt " + (out / "corpus.txt").string());
  CHECK(r.status == 1);
  const auto other = dir / "other";
  fs::create_directories(other);
  const auto cfg2 = write_config(other, "corpus.seed = 99\n");
  REQUIRE(run("gen-data --config " + cfg2.string()).status == 0);
  REQUIRE(run("pretrain-ser --config " + cfg2.string()).status == 0);
  r = run("eval --config " + cfg2.string() + " --ckpt " + (out / "iterative.ckpt").string());
  CHECK(r.status == 1);
  CHECK(r.output.find("different corpus") != std::string::npos);
}

TEST_CASE("oracle-check runs the verification suites") {
  const auto r = run("oracle-check --trials 3 --model-trials 1");
  CHECK(r.status == 0);
  CHECK(r.output.find("gradcheck matmul") != std::string::npos);
  CHECK(r.output.find("reinforce bias") != std::string::npos);
}
