// Copyright 2026 The cluesep Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cluesep/train.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <limits>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "cluesep/error.hpp"
#include "cluesep/ops.hpp"

namespace cluesep::train {

using nlohmann::json;
using num::Tensor;
using num::Var;

namespace {

struct SdrParts {
  double alpha, energy, num, den;
  bool floored;  // distortion below the guard; den is then constant
};

SdrParts sdr_parts(const double* est, std::span<const double> ref) {
  double dot = 0.0, energy = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    dot += est[i] * ref[i];
    energy += ref[i] * ref[i];
  }
  if (energy <= kEnergyEps) throw InputError("SI-SDR: reference energy below 1e-12");
  const double alpha = dot / energy;
  double err = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double e = alpha * ref[i] - est[i];
    err += e * e;
  }
  return {alpha, energy, alpha * alpha * energy, std::max(err, kSdrEps), err < kSdrEps};
}

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) throw InputError("SI-SDR: estimate has " + std::to_string(a) + " samples, reference " + std::to_string(b));
}

}  // namespace

double si_sdr(std::span<const double> estimate, std::span<const double> reference) {
  check_lengths(estimate.size(), reference.size());
  const SdrParts p = sdr_parts(estimate.data(), reference);
  return 10.0 * std::log10(p.num / p.den);
}

Var si_sdr_var(const Var& estimate, std::span<const double> reference) {
  check_lengths(estimate.size(), reference.size());
  const SdrParts p = sdr_parts(estimate.value().data(), reference);
  Tensor out({}, 10.0 * std::log10(p.num / p.den));
  std::vector<double> ref(reference.begin(), reference.end());
  return num::make_result(std::move(out), {estimate}, "si_sdr", [p, ref = std::move(ref)](num::Node& n) {
    // d/d est = 10/ln10 * (2 a s / N + 2 e / D), e = a s - est
    const double k = 10.0 / std::log(10.0) * n.grad[0];
    const double* est = n.inputs[0]->value.data();
    auto& g = n.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < ref.size(); ++i) {
      const double e = p.alpha * ref[i] - est[i];
      g[i] += k * (2.0 * p.alpha * ref[i] / p.num + (p.floored ? 0.0 : 2.0 * e / p.den));
    }
  });
}

Var si_sdr_loss(const std::vector<Var>& estimates, const std::vector<std::vector<double>>& references) {
  if (estimates.empty() || estimates.size() != references.size()) {
    throw InputError("si_sdr_loss: need matching non-empty estimate and reference lists");
  }
  Var total;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    Var s = si_sdr_var(estimates[i], references[i]);
    total = total.defined() ? num::add(total, s) : s;
  }
  return num::scale(total, -1.0 / static_cast<double>(estimates.size()));
}

void adam_step(num::ParameterSet& params, AdamState& state, double lr, const AdamConfig& cfg) {
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (auto& p : params.items()) {
    auto& m = state.m[p.name()];
    auto& v = state.v[p.name()];
    if (m.shape() != p.shape()) m = Tensor(p.shape(), 0.0);
    if (v.shape() != p.shape()) v = Tensor(p.shape(), 0.0);
    const Tensor& g = p.grad();
    if (g.empty()) continue;
    Tensor& w = p.mutable_value();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
    }
  }
}

double clip_grad_norm(num::ParameterSet& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params.items()) {
    if (p.grad().empty()) continue;
    for (double g : p.grad().values()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("gradient norm is not finite");
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& p : params.items()) {
      if (p.grad().empty()) continue;
      for (double& g : p.mutable_grad().values()) g *= s;
    }
  }
  return norm;
}

std::string_view condition_name(ClueCondition c) {
  switch (c) {
    case ClueCondition::kTextAudio: return "text-audio";
    case ClueCondition::kTextOnly: return "text-only";
    case ClueCondition::kAudioOnly: return "audio-only";
  }
  return "?";
}

ClueCondition parse_condition(std::string_view name) {
  for (ClueCondition c : kConditions)
    if (condition_name(c) == name) return c;
  throw ConfigError("unknown clue condition '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (stage != 1 && stage != 2) throw ConfigError("stage must be 1 or 2");
  if (batch_size == 0) throw ConfigError("batch_size must be > 0");
  if (lr_floor <= 0.0 || base_lr() < lr_floor) throw ConfigError("learning rate below its floor");
  if (max_signal_s < min_signal_s) throw ConfigError("max_signal_s below min_signal_s");
  for (double r : clue_ratio)
    if (r < 0.0) throw ConfigError("clue ratio entries must be >= 0");
  if (clue_ratio[0] + clue_ratio[1] + clue_ratio[2] <= 0.0) throw ConfigError("clue ratio sums to zero");
  if (stage == 1 && dm_enabled) throw ConfigError("dynamic mixing is a stage-2 feature");
  if (plateau_patience == 0) throw ConfigError("plateau_patience must be > 0");
}

LrDecision lr_schedule(std::size_t epoch, std::span<const double> val_history, double current_lr,
                       const TrainConfig& cfg) {
  LrDecision d{current_lr, false, false};
  if (epoch <= cfg.plateau_start_epoch || val_history.size() < epoch) return d;
  // length of the current run of stalled epochs, counting only those past the start
  std::size_t stalled = 0;
  for (std::size_t e = epoch; e > cfg.plateau_start_epoch && e >= 2; --e) {
    const double best_before = *std::min_element(val_history.begin(), val_history.begin() + (e - 1));
    if (val_history[e - 1] < best_before - cfg.plateau_threshold) break;
    ++stalled;
  }
  if (stalled > 0 && stalled % cfg.plateau_patience == 0) {
    d.halved = true;
    d.lr = current_lr / 2.0;
    if (d.lr <= cfg.lr_floor) {
      d.lr = cfg.lr_floor;
      d.stop = true;
    }
  }
  return d;
}

ClueCondition sample_clue_condition(Rng& rng, const TrainConfig& cfg) {
  if (cfg.stage == 1) return ClueCondition::kTextAudio;
  const double total = cfg.clue_ratio[0] + cfg.clue_ratio[1] + cfg.clue_ratio[2];
  const double u = rng.uniform() * total;
  if (u < cfg.clue_ratio[0]) return ClueCondition::kTextAudio;
  if (u < cfg.clue_ratio[0] + cfg.clue_ratio[1]) return ClueCondition::kTextOnly;
  return ClueCondition::kAudioOnly;
}

std::string truncate_tokens(const std::string& text, std::size_t max_tokens) {
  const clue::Tokens t = clue::tokenize(text, max_tokens);
  if (!t.truncated) return text;
  std::string out;
  for (const auto& w : t.tokens) out += (out.empty() ? "" : " ") + w;
  return out;
}

clue::ClueBundle make_bundle(const data::MixtureSpec& spec, const dsp::Waveform& clue_audio, ClueCondition c) {
  clue::ClueBundle b;
  switch (c) {
    case ClueCondition::kTextAudio:
      b.audio = clue_audio;
      b.text = spec.reference_clue.text;
      break;
    case ClueCondition::kTextOnly:
      b.text = spec.text_clue.text;
      break;
    case ClueCondition::kAudioOnly:
      b.audio = clue_audio;
      break;
  }
  return b;
}

namespace {

std::vector<double> crop(const std::vector<double>& x, std::size_t offset, std::size_t len) {
  return {x.begin() + static_cast<std::ptrdiff_t>(offset), x.begin() + static_cast<std::ptrdiff_t>(offset + len)};
}

}  // namespace

std::optional<BatchItem> build_item(const data::MixtureSpec& spec, ClueCondition condition, data::AudioCache& cache,
                                    const TrainConfig& cfg, Rng& rng) {
  const data::SynthesizedMixture syn = data::synthesize_mixture(spec, cache);
  const auto min_len = static_cast<std::size_t>(cfg.min_signal_s * dsp::kSampleRate);
  if (syn.mixture.size() < min_len) {
    spdlog::info("{}: {} samples, shorter than {} s; skipped", spec.mixture_id, syn.mixture.size(), cfg.min_signal_s);
    return std::nullopt;
  }
  const auto max_len = static_cast<std::size_t>(cfg.max_signal_s * dsp::kSampleRate);
  BatchItem item;
  item.mixture_id = spec.mixture_id;
  item.condition = condition;
  item.spec = spec;
  const std::size_t len = std::min(syn.mixture.size(), max_len);
  // keep the crop inside the target's own span so the reference is never silent
  const std::size_t target_len = cache.corpus().at(spec.target_id).samples();
  const std::size_t span = std::max(target_len, len);
  const std::size_t off = rng.index(std::min(span, syn.mixture.size()) - len + 1);
  item.mixture = crop(syn.mixture.samples, off, len);
  item.reference = crop(syn.target.samples, off, len);
  item.interference = crop(syn.interference.samples, off, len);

  dsp::Waveform clue_audio = syn.clue_audio;
  if (clue_audio.size() > max_len) {
    const std::size_t coff = rng.index(clue_audio.size() - max_len + 1);
    clue_audio.samples = crop(clue_audio.samples, coff, max_len);
  }
  item.clue = make_bundle(spec, clue_audio, condition);
  if (item.clue.text) item.clue.text = truncate_tokens(*item.clue.text, cfg.max_text_tokens);
  return item;
}

std::vector<BatchItem> build_batch(std::span<const data::MixtureSpec> specs, std::span<const ClueCondition> conditions,
                                   data::AudioCache& cache, const TrainConfig& cfg, Rng& rng) {
  if (conditions.size() != specs.size()) throw ConfigError("build_batch: one condition per mixture");
  std::vector<BatchItem> out;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const ClueCondition c = cfg.stage == 1 ? ClueCondition::kTextAudio : conditions[i];
    if (auto item = build_item(specs[i], c, cache, cfg, rng)) out.push_back(std::move(*item));
  }
  return out;
}

// ---- trainer

Trainer::Trainer(Model& model, const clue::TextEncoder& text, const data::Corpus& corpus,
                 std::vector<data::MixtureSpec> mixtures, TrainConfig cfg)
    : model_(model), text_(text), corpus_(corpus), cache_(corpus), cfg_(std::move(cfg)), lr_(cfg_.base_lr()) {
  cfg_.validate();
  train_ = data::filter_split(mixtures, data::Split::kTrain);
  dev_ = data::filter_split(mixtures, data::Split::kDev);
  if (train_.empty()) throw DataError("no training mixtures");
  if (cfg_.max_val_items > 0 && dev_.size() > cfg_.max_val_items) dev_.resize(cfg_.max_val_items);
}

std::size_t Trainer::steps_per_epoch() const {
  if (cfg_.steps_per_epoch > 0) return cfg_.steps_per_epoch;
  return (train_.size() + cfg_.batch_size - 1) / cfg_.batch_size;
}

std::vector<BatchItem> Trainer::batch_for(std::size_t epoch, std::size_t step) {
  std::vector<std::size_t> order(train_.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle(derive_seed(cfg_.seed, {0x6f72646572ULL, static_cast<std::uint64_t>(cfg_.stage), epoch}));
  std::shuffle(order.begin(), order.end(), shuffle.engine());
  std::vector<BatchItem> batch;
  for (std::size_t i = 0; i < cfg_.batch_size; ++i) {
    const std::size_t slot = step * cfg_.batch_size + i;
    data::MixtureSpec spec = train_[order[slot % order.size()]];
    Rng rng(derive_seed(cfg_.seed, {fnv1a(spec.mixture_id), epoch, static_cast<std::uint64_t>(cfg_.stage), slot}));
    const ClueCondition c = sample_clue_condition(rng, cfg_);
    if (cfg_.dm_enabled) spec = data::dynamic_remix(spec, corpus_, rng);
    if (auto item = build_item(spec, c, cache_, cfg_, rng)) batch.push_back(std::move(*item));
  }
  return batch;
}

double Trainer::loss_on(const std::vector<BatchItem>& batch) const {
  num::NoGradGuard no_grad;
  std::vector<Var> est;
  std::vector<std::vector<double>> refs;
  for (const auto& item : batch) {
    est.push_back(model_.extract(item.mixture, item.clue, text_));
    refs.push_back(item.reference);
  }
  return si_sdr_loss(est, refs).value()[0];
}

double Trainer::train_step(const std::vector<BatchItem>& batch) {
  if (batch.empty()) return 0.0;
  model_.params().zero_grad();
  std::vector<Var> est;
  std::vector<std::vector<double>> refs;
  for (const auto& item : batch) {
    est.push_back(model_.extract(item.mixture, item.clue, text_));
    refs.push_back(item.reference);
  }
  Var loss = si_sdr_loss(est, refs);
  loss.backward();
  clip_grad_norm(model_.params(), cfg_.grad_clip);
  adam_step(model_.params(), adam_, lr_);
  return loss.value()[0];
}

double Trainer::validate() {
  if (dev_.empty()) return 0.0;
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& spec : dev_) {
    Rng rng(derive_seed(cfg_.seed, {fnv1a(spec.mixture_id), 0x76616cULL}));
    const ClueCondition c = sample_clue_condition(rng, cfg_);
    if (auto item = build_item(spec, c, cache_, cfg_, rng)) {
      total += loss_on({*item});
      ++n;
    }
  }
  return n ? total / static_cast<double>(n) : 0.0;
}

void Trainer::save(const std::filesystem::path& path, std::size_t epoch, const std::vector<double>& val_history,
                   double best_val, const TrainResult& so_far) const {
  json meta{{"stage", cfg_.stage},
            {"epoch", epoch},
            {"lr", lr_},
            {"val_history", val_history},
            {"best_val", best_val},
            {"total_steps", so_far.total_steps},
            {"condition_counts", so_far.condition_counts},
            {"adam_step", adam_.step},
            {"seed", cfg_.seed}};
  Checkpoint ck = model_checkpoint(model_, meta.dump());
  for (const auto& [name, t] : adam_.m) ck.tensors.emplace("adam.m/" + name, t);
  for (const auto& [name, t] : adam_.v) ck.tensors.emplace("adam.v/" + name, t);
  save_checkpoint(path, ck);
}

TrainResult Trainer::run(const RunPaths& paths, const std::function<void(const EpochLog&)>& on_epoch) {
  namespace fs = std::filesystem;
  TrainResult result;
  std::vector<double> val_history;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t start_epoch = 1;
  const fs::path last = paths.out_dir / "last.ckpt", best = paths.out_dir / "best.ckpt";
  const fs::path metrics_path = paths.out_dir / "metrics.jsonl";
  fs::create_directories(paths.out_dir);

  if (paths.resume && fs::exists(last)) {
    const Checkpoint ck = load_checkpoint(last);
    const json meta = json::parse(ck.meta_json);
    if (meta.at("stage").get<int>() != cfg_.stage) throw ConfigError("resume checkpoint belongs to another stage");
    restore_parameters(model_, ck);
    adam_ = AdamState{};
    for (const auto& [name, t] : ck.tensors) {
      if (name.rfind("adam.m/", 0) == 0) adam_.m[name.substr(7)] = t;
      if (name.rfind("adam.v/", 0) == 0) adam_.v[name.substr(7)] = t;
    }
    adam_.step = meta.at("adam_step").get<std::uint64_t>();
    lr_ = meta.at("lr").get<double>();
    val_history = meta.at("val_history").get<std::vector<double>>();
    best_val = meta.at("best_val").get<double>();
    result.total_steps = meta.at("total_steps").get<std::size_t>();
    result.condition_counts = meta.at("condition_counts").get<std::array<std::size_t, 3>>();
    start_epoch = meta.at("epoch").get<std::size_t>() + 1;
    spdlog::info("resuming stage {} at epoch {}", cfg_.stage, start_epoch);
  } else if (cfg_.stage == 2) {
    if (!paths.init_from) throw ConfigError("stage 2 needs a stage-1 checkpoint (--init-from)");
    if (!fs::exists(*paths.init_from)) {
      throw ConfigError("stage 2: stage-1 checkpoint not found: " + paths.init_from->string());
    }
    restore_parameters(model_, load_checkpoint(*paths.init_from));
  }

  std::ofstream metrics(metrics_path, start_epoch > 1 ? std::ios::app : std::ios::trunc);
  if (!metrics) throw DataError("cannot write " + metrics_path.string());

  const std::size_t per_epoch = steps_per_epoch();
  const std::size_t epochs =
      cfg_.stage == 1 ? (cfg_.stage1_steps + per_epoch - 1) / per_epoch : cfg_.max_epochs;
  for (std::size_t epoch = start_epoch; epoch <= epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochLog log;
    log.epoch = epoch;
    log.stage = cfg_.stage;
    log.lr = lr_;
    double loss_sum = 0.0;
    std::size_t loss_n = 0;
    for (std::size_t step = 0; step < per_epoch; ++step) {
      if (cfg_.stage == 1 && result.total_steps >= cfg_.stage1_steps) break;
      const auto batch = batch_for(epoch, step);
      for (const auto& item : batch) ++log.condition_counts[static_cast<int>(item.condition)];
      loss_sum += train_step(batch);
      ++loss_n;
      ++result.total_steps;
      ++log.steps;
    }
    for (int c = 0; c < 3; ++c) result.condition_counts[c] += log.condition_counts[c];
    log.train_loss = loss_n ? loss_sum / static_cast<double>(loss_n) : 0.0;
    log.val_loss = validate();
    val_history.push_back(log.val_loss);
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    bool stop = false;
    if (cfg_.stage == 2) {
      const LrDecision d = lr_schedule(epoch, val_history, lr_, cfg_);
      if (d.halved) spdlog::info("epoch {}: validation stalled, lr {} -> {}", epoch, lr_, d.lr);
      lr_ = d.lr;
      stop = d.stop && cfg_.stop_at_floor;
    }
    json line{{"epoch", log.epoch},
              {"stage", log.stage},
              {"lr", log.lr},
              {"train_loss", log.train_loss},
              {"val_loss", log.val_loss},
              {"clue_condition_counts",
               {{"text-audio", log.condition_counts[0]},
                {"text-only", log.condition_counts[1]},
                {"audio-only", log.condition_counts[2]}}},
              {"steps", log.steps},
              {"seconds", log.seconds}};
    metrics << line.dump() << '\n' << std::flush;
    spdlog::info("stage {} epoch {}: train {:.3f} val {:.3f} lr {:.2e} ({:.1f} s)", log.stage, epoch, log.train_loss,
                 log.val_loss, log.lr, log.seconds);
    result.epochs.push_back(log);
    if (log.val_loss < best_val) {
      best_val = log.val_loss;
      save(best, epoch, val_history, best_val, result);
    }
    save(last, epoch, val_history, best_val, result);
    if (on_epoch) on_epoch(log);
    if (stop) {
      result.stopped_at_floor = true;
      spdlog::info("learning rate reached its floor; stopping");
      break;
    }
  }
  result.best_val_loss = best_val;
  return result;
}

}  // namespace cluesep::train
