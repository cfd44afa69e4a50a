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

#include "ietts/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "ietts/log.hpp"

namespace ietts::train {

using ad::Var;

std::string_view regime_name(Regime r) { return r == Regime::kMseOnly ? "mse-only" : "iterative"; }

Regime parse_regime(std::string_view name) {
  if (name == "mse-only") return Regime::kMseOnly;
  if (name == "iterative") return Regime::kIterative;
  throw std::invalid_argument("unknown regime '" + std::string(name) + "' (expected mse-only or iterative)");
}

namespace {

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed, const std::string& stream) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, stream);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::uint64_t bits(double v) { return std::bit_cast<std::uint64_t>(v); }

}  // namespace

double mean_mse_loss(const agent::Agent& agent, const std::vector<corpus::Utterance>& items) {
  if (items.empty()) return 0.0;
  ad::NoGradGuard guard;
  double total = 0.0;
  for (const auto& u : items) total += agent.mse_loss(u.text, u.features, u.features).total.item();
  return total / static_cast<double>(items.size());
}

PretrainResult pretrain_agent(agent::Agent& agent, optim::Adam& adam, const corpus::Corpus& corpus,
                              const optim::Schedule& schedule, std::uint64_t seed, std::size_t log_every) {
  schedule.validate();
  const auto& train = corpus.train;
  if (train.empty()) throw std::invalid_argument("pretrain_agent: empty train split");
  const std::size_t B = std::min(schedule.batch_size, train.size());
  const std::size_t per_epoch = train.size() / B;
  PretrainResult res;
  res.initial_val_loss = mean_mse_loss(agent, corpus.val);
  std::vector<std::size_t> order;
  Rng dropout = make_rng(seed, "pretrain/dropout");
  double interval = 0.0;
  std::size_t interval_n = 0;
  for (std::uint64_t step = 0; step < schedule.pretrain_steps; ++step) {
    const std::uint64_t epoch = step / per_epoch;
    const std::size_t b = step % per_epoch;
    if (b == 0) order = shuffled(train.size(), seed, "pretrain/epoch/" + std::to_string(epoch));
    agent.params().zero_grad();
    double loss = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
      const auto& u = train[order[b * B + i]];
      const Var l = ad::scale(agent.mse_loss(u.text, u.features, u.features, &dropout).total,
                                  1.0 / static_cast<double>(B));
      ad::backward(l);
      loss += l.item();
    }
    if (!std::isfinite(loss)) throw NumericError("agent pretraining diverged at step " + std::to_string(step));
    adam.step(agent.params(), optim::lr_at(step, schedule));
    res.steps_run = step + 1;
    interval += loss;
    ++interval_n;
    if (res.steps_run % log_every == 0 || res.steps_run == schedule.pretrain_steps) {
      res.loss_curve.push_back(interval / static_cast<double>(interval_n));
      log::info("pretrain step " + std::to_string(res.steps_run) + " loss " + std::to_string(res.loss_curve.back()));
      interval = 0.0;
      interval_n = 0;
    }
  }
  agent.params().zero_grad();
  res.final_val_loss = mean_mse_loss(agent, corpus.val);
  return res;
}

void IterativeConfig::validate() const {
  reward.validate();
  schedule.validate();
  if (reward.k > schedule.batch_size) {
    throw std::invalid_argument("K = " + std::to_string(reward.k) + " exceeds the batch size " +
                                std::to_string(schedule.batch_size));
  }
  if (convergence_window < 1) throw std::invalid_argument("convergence window must be >= 1");
  if (!(baseline_decay >= 0.0 && baseline_decay < 1.0)) throw std::invalid_argument("baseline decay must be in [0, 1)");
}

std::string metrics_json(const EpochMetrics& m) {
  nlohmann::ordered_json j;
  j["step"] = m.step;
  j["epoch"] = m.epoch;
  j["reward"] = m.reward;
  j["mse"] = m.mse;
  j["val_ser_acc"] = m.val_ser_acc;
  j["lr"] = m.lr;
  return j.dump();
}

double synthesized_ser_accuracy(const agent::Agent& agent, const ser::SerModel& ser,
                                const std::vector<corpus::Utterance>& items) {
  if (items.empty()) return 0.0;
  std::size_t hit = 0;
  for (const auto& u : items) {
    const auto y = agent.synthesize_from_reference(u.text, u.features);
    if (y.frames >= ser.hyper().kernel && ser.predict(y) == u.label) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(items.size());
}

IterativeTrainer::IterativeTrainer(agent::Agent agent, optim::Adam adam, const ser::SerModel& ser,
                                   const corpus::Corpus& corpus, IterativeConfig cfg, std::uint64_t seed,
                                   std::uint64_t pretrain_steps)
    : agent_(std::move(agent)),
      adam_(std::move(adam)),
      rl_adam_(agent_.params(), adam_.config()),
      ser_(&ser),
      corpus_(&corpus),
      cfg_(cfg),
      seed_(seed),
      pretrain_steps_(pretrain_steps),
      rng_(make_rng(seed, "iterative")),
      baseline_(cfg.baseline_decay) {
  cfg_.validate();
  if (corpus.train.size() < cfg_.schedule.batch_size) {
    throw std::invalid_argument("train split smaller than one batch");
  }
  if (agent_.hyper().min_frames < ser.hyper().kernel) {
    throw std::invalid_argument("agent min_frames is shorter than the classifier's conv kernel");
  }
  batches_per_epoch_ = corpus.train.size() / cfg_.schedule.batch_size;
  if (cfg_.schedule.iterative_epochs == 0) finished_ = true;
}

double IterativeTrainer::current_lr() const {
  return optim::lr_at(cfg_.restart_schedule ? batches_ : pretrain_steps_ + batches_, cfg_.schedule);
}

std::vector<std::size_t> IterativeTrainer::epoch_order(std::uint64_t epoch) const {
  return shuffled(corpus_->train.size(), seed_, "iterative/epoch/" + std::to_string(epoch));
}

void IterativeTrainer::rl_update(const std::vector<std::size_t>& batch, double lr) {
  // K items drawn uniformly without replacement (partial Fisher-Yates).
  std::vector<std::size_t> pick = batch;
  for (std::size_t i = 0; i < cfg_.reward.k; ++i) {
    std::uniform_int_distribution<std::size_t> d(i, pick.size() - 1);
    std::swap(pick[i], pick[d(rng_)]);
  }
  pick.resize(cfg_.reward.k);

  std::vector<agent::PolicySample> samples;
  std::vector<double> probs;
  samples.reserve(pick.size());
  for (std::size_t idx : pick) {
    const auto& u = corpus_->train[idx];
    const Var memory = agent_.encode_text(u.text);
    const auto emb = agent_.reference_to_embedding(u.features);
    samples.push_back(agent_.decode(memory, emb, agent::DecodeMode::kSampled, nullptr, &rng_));
    probs.push_back(ser_->probability(samples.back().features, u.label));
  }
  const rl::RewardBatch rb = rl::compute_reward(probs, cfg_.reward);
  const double weight = cfg_.use_baseline ? baseline_.advantage(rb.reward) : rb.reward;
  agent_.params().zero_grad();
  ad::backward(rl::reinforce_surrogate(samples, weight));
  rl_adam_.step(agent_.params(), lr);
  ++rl_updates_;
  epoch_reward_ += rb.reward;
}

void IterativeTrainer::mse_update(const std::vector<std::size_t>& batch, double lr) {
  agent_.params().zero_grad();
  const double scale = 1.0 / static_cast<double>(batch.size());
  double mse = 0.0;
  for (std::size_t idx : batch) {
    const auto& u = corpus_->train[idx];
    const auto parts = agent_.mse_loss(u.text, u.features, u.features, &rng_);
    ad::backward(ad::scale(parts.total, scale));
    mse += parts.mse.item() * scale;
  }
  if (!std::isfinite(mse)) throw NumericError("MSE loss became non-finite at batch " + std::to_string(batches_));
  adam_.step(agent_.params(), lr);
  ++mse_updates_;
  epoch_mse_ += mse;
}

void IterativeTrainer::end_epoch(double lr) {
  EpochMetrics m;
  m.step = batches_;
  m.epoch = batches_ / batches_per_epoch_;
  const double n = static_cast<double>(batches_per_epoch_);
  m.reward = cfg_.regime == Regime::kIterative ? epoch_reward_ / n : 0.0;
  m.mse = epoch_mse_ / n;
  m.val_ser_acc = synthesized_ser_accuracy(agent_, *ser_, corpus_->val);
  m.lr = lr;
  epoch_reward_ = 0.0;
  epoch_mse_ = 0.0;
  metrics_.push_back(m);
  log::info(std::string(regime_name(cfg_.regime)) + " " + metrics_json(m));
  const std::size_t w = cfg_.convergence_window + 1;
  if (m.epoch >= cfg_.schedule.iterative_epochs) {
    finished_ = true;
  } else if (m.epoch >= std::max<std::uint64_t>(cfg_.min_epochs, w)) {
    auto first = metrics_.end() - static_cast<std::ptrdiff_t>(w);
    const auto [lo, hi] = std::minmax_element(first, metrics_.end(), [](const auto& a, const auto& b) {
      return a.val_ser_acc < b.val_ser_acc;
    });
    if (hi->val_ser_acc - lo->val_ser_acc < cfg_.convergence_tolerance) {
      log::info("validation accuracy converged after epoch " + std::to_string(m.epoch));
      finished_ = true;
    }
  }
  // After the stop decision so that a checkpoint taken here is complete.
  if (on_epoch) on_epoch(m);
}

bool IterativeTrainer::step() {
  if (finished_) return false;
  try {
    const std::uint64_t epoch = batches_ / batches_per_epoch_;
    const std::size_t b = batches_ % batches_per_epoch_;
    const auto order = epoch_order(epoch);
    const std::size_t B = cfg_.schedule.batch_size;
    const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(b * B),
                                         order.begin() + static_cast<std::ptrdiff_t>((b + 1) * B));
    const double lr = current_lr();
    if (cfg_.regime == Regime::kIterative) rl_update(batch, lr);
    mse_update(batch, lr);
    ++batches_;
    if (batches_ % batches_per_epoch_ == 0) end_epoch(lr);
  } catch (const NumericError&) {
    if (divergence_checkpoint) {
      checkpoint().save(*divergence_checkpoint);
      log::warn("training diverged; state written to " + divergence_checkpoint->string());
    }
    throw;
  }
  return !finished_;
}

void IterativeTrainer::run(std::uint64_t max_batches) {
  for (std::uint64_t i = 0; i < max_batches && step(); ++i) {
  }
}

std::uint64_t IterativeTrainer::config_hash() const {
  const auto& s = cfg_.schedule;
  std::ostringstream o;
  o << regime_name(cfg_.regime) << ' ' << bits(cfg_.reward.lambda) << ' ' << cfg_.reward.k << ' ' << bits(s.base_lr)
    << ' ' << s.decay_start << ' ' << bits(s.floor_lr) << ' ' << s.pretrain_steps << ' ' << s.iterative_epochs << ' '
    << s.batch_size << ' ' << cfg_.restart_schedule << ' ' << cfg_.convergence_window << ' '
    << bits(cfg_.convergence_tolerance) << ' ' << cfg_.min_epochs << ' ' << cfg_.use_baseline << ' '
    << bits(cfg_.baseline_decay) << ' ' << seed_ << ' ' << pretrain_steps_;
  return fnv1a(o.str());
}

void put_agent_hyper(ckpt::Checkpoint& c, const agent::AgentHyper& h) {
  c.put_u64("hyper.agent", {h.vocab, h.channels, h.emotions, h.embed, h.hidden, h.style, h.ref_conv, h.ref_kernel,
                            h.ref_hidden, h.prenet, h.decoder, h.mixtures, h.reduction, h.max_frames, h.min_frames});
  c.put_f64("hyper.agent.real", {h.init_sigma, h.init_increment, h.prenet_dropout});
}

agent::AgentHyper get_agent_hyper(const ckpt::Checkpoint& c) {
  const auto& u = c.u64("hyper.agent");
  const auto& f = c.f64("hyper.agent.real");
  if (u.size() != 15 || f.size() != 3) throw FormatError("checkpoint: malformed agent hyperparameters");
  agent::AgentHyper h;
  h.vocab = u[0];
  h.channels = u[1];
  h.emotions = u[2];
  h.embed = u[3];
  h.hidden = u[4];
  h.style = u[5];
  h.ref_conv = u[6];
  h.ref_kernel = u[7];
  h.ref_hidden = u[8];
  h.prenet = u[9];
  h.decoder = u[10];
  h.mixtures = u[11];
  h.reduction = u[12];
  h.max_frames = u[13];
  h.min_frames = u[14];
  h.init_sigma = f[0];
  h.init_increment = f[1];
  h.prenet_dropout = f[2];
  return h;
}

void put_ser_hyper(ckpt::Checkpoint& c, const ser::SerHyper& h) {
  c.put_u64("hyper.ser", {h.channels, h.conv_channels, h.kernel, h.hidden, h.attention, h.emotions});
}

ser::SerHyper get_ser_hyper(const ckpt::Checkpoint& c) {
  const auto& u = c.u64("hyper.ser");
  if (u.size() != 6) throw FormatError("checkpoint: malformed classifier hyperparameters");
  return {u[0], u[1], u[2], u[3], u[4], u[5]};
}

namespace {

bool same_agent_hyper(const agent::AgentHyper& a, const agent::AgentHyper& b) {
  ckpt::Checkpoint x, y;
  put_agent_hyper(x, a);
  put_agent_hyper(y, b);
  return x == y;
}

}  // namespace

ckpt::Checkpoint IterativeTrainer::checkpoint() const {
  ckpt::Checkpoint c;
  put_agent_hyper(c, agent_.hyper());
  put_ser_hyper(c, ser_->hyper());
  c.put_params("theta", agent_.params());
  c.put_params("phi", ser_->params());
  c.put_adam("opt_agent", adam_, agent_.params());
  c.put_adam("opt_rl", rl_adam_, agent_.params());
  const auto& s = cfg_.schedule;
  c.put_u64("schedule", {s.decay_start, s.pretrain_steps, s.iterative_epochs, s.batch_size, pretrain_steps_,
                         cfg_.restart_schedule ? 1u : 0u});
  c.put_f64("schedule.lr", {s.base_lr, s.floor_lr});
  c.put_u64("progress", {batches_, rl_updates_, mse_updates_, finished_ ? 1u : 0u, baseline_.initialised() ? 1u : 0u});
  c.put_f64("progress.accumulators", {epoch_reward_, epoch_mse_, baseline_.value()});
  std::vector<double> hist;
  for (const auto& m : metrics_) {
    hist.insert(hist.end(), {static_cast<double>(m.step), static_cast<double>(m.epoch), m.reward, m.mse,
                             m.val_ser_acc, m.lr});
  }
  c.put_f64("progress.metrics", hist, {metrics_.size(), 6});
  c.put_rng("rng", rng_);
  c.put_u64("corpus_hash", {corpus::corpus_hash(*corpus_)});
  c.put_u64("config_hash", {config_hash()});
  return c;
}

void IterativeTrainer::restore(const ckpt::Checkpoint& c) {
  if (c.u64_scalar("corpus_hash") != corpus::corpus_hash(*corpus_)) {
    throw FormatError("checkpoint was written for a different corpus");
  }
  if (c.u64_scalar("config_hash") != config_hash()) {
    throw FormatError("checkpoint was written with a different training configuration");
  }
  if (!same_agent_hyper(get_agent_hyper(c), agent_.hyper())) {
    throw FormatError("checkpoint agent hyperparameters differ from the model");
  }
  {
    nn::ParameterSet phi = ser_->params();
    c.load_params("phi", phi);
    if (phi.checksum() != ser_->params().checksum()) {
      throw FormatError("checkpoint classifier parameters differ from the frozen classifier");
    }
  }
  c.load_params("theta", agent_.params());
  c.load_adam("opt_agent", adam_, agent_.params());
  c.load_adam("opt_rl", rl_adam_, agent_.params());
  const auto& p = c.u64("progress");
  const auto& acc = c.f64("progress.accumulators");
  const auto& hist = c.f64("progress.metrics");
  if (p.size() != 5 || acc.size() != 3 || hist.size() % 6 != 0) throw FormatError("checkpoint: malformed progress");
  batches_ = p[0];
  rl_updates_ = p[1];
  mse_updates_ = p[2];
  finished_ = p[3] != 0;
  baseline_.restore(acc[2], p[4] != 0);
  epoch_reward_ = acc[0];
  epoch_mse_ = acc[1];
  metrics_.clear();
  for (std::size_t i = 0; i < hist.size(); i += 6) {
    metrics_.push_back({static_cast<std::uint64_t>(hist[i]), static_cast<std::uint64_t>(hist[i + 1]), hist[i + 2],
                        hist[i + 3], hist[i + 4], hist[i + 5]});
  }
  c.load_rng("rng", rng_);
}

ckpt::Checkpoint agent_checkpoint(const agent::Agent& agent, const optim::Adam& adam, std::uint64_t pretrain_steps,
                                  std::uint64_t corpus_hash) {
  ckpt::Checkpoint c;
  put_agent_hyper(c, agent.hyper());
  c.put_params("theta", agent.params());
  c.put_adam("opt_agent", adam, agent.params());
  c.put_u64("progress.pretrain_steps", {pretrain_steps});
  c.put_u64("corpus_hash", {corpus_hash});
  return c;
}

LoadedAgent load_agent(const ckpt::Checkpoint& c) {
  LoadedAgent out;
  const agent::AgentHyper h = get_agent_hyper(c);
  try {
    h.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint: invalid agent hyperparameters: ") + e.what());
  }
  out.agent = agent::Agent::zeros(h);
  c.load_params("theta", out.agent.params());
  out.adam = optim::Adam(out.agent.params());
  if (c.has("opt_agent.step")) c.load_adam("opt_agent", out.adam, out.agent.params());
  out.pretrain_steps = c.has("progress.pretrain_steps") ? c.u64_scalar("progress.pretrain_steps") : 0;
  out.corpus_hash = c.u64_scalar("corpus_hash");
  return out;
}

ckpt::Checkpoint ser_checkpoint(const ser::SerModel& model, std::uint64_t corpus_hash) {
  ckpt::Checkpoint c;
  put_ser_hyper(c, model.hyper());
  c.put_params("phi", model.params());
  c.put_u64("corpus_hash", {corpus_hash});
  return c;
}

ser::SerModel load_ser(const ckpt::Checkpoint& c) {
  ser::SerModel m = ser::SerModel::zeros(get_ser_hyper(c));
  c.load_params("phi", m.params());
  return m;
}

}  // namespace ietts::train
