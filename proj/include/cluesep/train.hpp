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

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cluesep/dataset.hpp"
#include "cluesep/model.hpp"

namespace cluesep::train {

inline constexpr double kSdrEps = 1e-12;     // distortion floor
inline constexpr double kEnergyEps = 1e-12;  // minimum reference energy

// 10 log10(|a s|^2 / max(|a s - est|^2, eps)), a = <est, s> / |s|^2.
// InputError on length mismatch or a silent reference.
double si_sdr(std::span<const double> estimate, std::span<const double> reference);
// Differentiable in the estimate.
num::Var si_sdr_var(const num::Var& estimate, std::span<const double> reference);
// Mean of -SI-SDR over the batch.
num::Var si_sdr_loss(const std::vector<num::Var>& estimates, const std::vector<std::vector<double>>& references);

// ---- optimizer

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::map<std::string, num::Tensor> m, v;
  std::uint64_t step = 0;
};

// Bias-corrected Adam update over every parameter that holds a gradient.
void adam_step(num::ParameterSet& params, AdamState& state, double lr, const AdamConfig& cfg = {});
// Scales gradients so their global L2 norm is at most max_norm; returns the norm before clipping.
double clip_grad_norm(num::ParameterSet& params, double max_norm);

// ---- schedule and clue conditions

enum class ClueCondition { kTextAudio, kTextOnly, kAudioOnly };
inline constexpr std::array<ClueCondition, 3> kConditions = {ClueCondition::kTextAudio, ClueCondition::kTextOnly,
                                                             ClueCondition::kAudioOnly};
std::string_view condition_name(ClueCondition c);
ClueCondition parse_condition(std::string_view name);

struct TrainConfig {
  int stage = 1;
  double lr_stage1 = 2e-4;
  double lr_stage2 = 1.5e-4;
  double lr_floor = 1e-6;
  std::size_t plateau_patience = 2;
  std::size_t plateau_start_epoch = 70;
  double plateau_threshold = 1e-4;  // smallest val-loss decrease that counts
  std::size_t batch_size = 4;
  double max_signal_s = 3.0;
  double min_signal_s = 0.5;
  std::size_t max_text_tokens = 20;
  std::array<double, 3> clue_ratio = {2.0, 2.0, 1.0};  // text+audio : text : audio
  bool dm_enabled = false;
  std::uint64_t seed = 0;
  double grad_clip = 5.0;
  std::size_t stage1_steps = 100000;  // stage 1 is step-budgeted at fixed lr
  std::size_t max_epochs = 200;       // stage 2 is epoch-scheduled
  std::size_t steps_per_epoch = 0;    // 0: one pass over the train split
  std::size_t max_val_items = 0;      // 0: whole dev split
  bool stop_at_floor = true;

  double base_lr() const { return stage == 1 ? lr_stage1 : lr_stage2; }
  void validate() const;  // ConfigError
};

struct LrDecision {
  double lr = 0.0;
  bool halved = false;
  bool stop = false;  // the floor was reached
};

// epoch is 1-based; val_history[i] is the validation loss after epoch i + 1
// (through `epoch`). Past plateau_start_epoch, every run of `patience`
// consecutive epochs without improvement over the best earlier loss halves
// the rate; the result is clamped at lr_floor.
LrDecision lr_schedule(std::size_t epoch, std::span<const double> val_history, double current_lr,
                       const TrainConfig& cfg);

// 2:2:1 categorical draw in stage 2; always text+audio in stage 1.
ClueCondition sample_clue_condition(Rng& rng, const TrainConfig& cfg);

// ---- batches

struct BatchItem {
  std::string mixture_id;
  std::vector<double> mixture;
  std::vector<double> reference;
  std::vector<double> interference;
  clue::ClueBundle clue;
  ClueCondition condition = ClueCondition::kTextAudio;
  data::MixtureSpec spec;
};

// Clue for a condition: text+audio uses the reference audio with its Type II
// prompt, text-only the Type I description, audio-only the reference alone.
clue::ClueBundle make_bundle(const data::MixtureSpec& spec, const dsp::Waveform& clue_audio, ClueCondition c);
std::string truncate_tokens(const std::string& text, std::size_t max_tokens);

// Synthesizes, crops to max_signal_s from one aligned random offset, and
// builds the clue bundle. Mixtures shorter than min_signal_s are skipped.
std::optional<BatchItem> build_item(const data::MixtureSpec& spec, ClueCondition condition, data::AudioCache& cache,
                                    const TrainConfig& cfg, Rng& rng);
std::vector<BatchItem> build_batch(std::span<const data::MixtureSpec> specs, std::span<const ClueCondition> conditions,
                                   data::AudioCache& cache, const TrainConfig& cfg, Rng& rng);

// ---- training loop

struct EpochLog {
  std::size_t epoch = 0;
  int stage = 1;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::array<std::size_t, 3> condition_counts{};
  std::size_t steps = 0;
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  std::size_t total_steps = 0;
  double best_val_loss = 0.0;
  bool stopped_at_floor = false;
  std::array<std::size_t, 3> condition_counts{};
};

struct RunPaths {
  std::filesystem::path out_dir;                    // checkpoints + metrics.jsonl
  std::optional<std::filesystem::path> init_from;   // stage-1 checkpoint for stage 2
  bool resume = false;                              // continue from out_dir/last.ckpt
};

class Trainer {
 public:
  Trainer(Model& model, const clue::TextEncoder& text, const data::Corpus& corpus,
          std::vector<data::MixtureSpec> mixtures, TrainConfig cfg);

  // Loss on one batch, then a clipped Adam step at the current rate.
  double train_step(const std::vector<BatchItem>& batch);
  // Items and conditions drawn for `step` of `epoch` (pure function of the seed).
  std::vector<BatchItem> batch_for(std::size_t epoch, std::size_t step);
  double validate();
  double loss_on(const std::vector<BatchItem>& batch) const;

  TrainResult run(const RunPaths& paths, const std::function<void(const EpochLog&)>& on_epoch = {});

  const TrainConfig& config() const { return cfg_; }
  AdamState& optimizer() { return adam_; }
  double lr() const { return lr_; }
  std::size_t steps_per_epoch() const;
  data::AudioCache& cache() { return cache_; }

  void save(const std::filesystem::path& path, std::size_t epoch, const std::vector<double>& val_history,
            double best_val, const TrainResult& so_far) const;

 private:
  Model& model_;
  const clue::TextEncoder& text_;
  const data::Corpus& corpus_;
  data::AudioCache cache_;
  std::vector<data::MixtureSpec> train_, dev_;
  TrainConfig cfg_;
  AdamState adam_;
  double lr_;
};

}  // namespace cluesep::train
