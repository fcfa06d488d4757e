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
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cluesep/dataset.hpp"
#include "cluesep/model.hpp"
#include "cluesep/train.hpp"

namespace cluesep::eval {

using train::ClueCondition;

// si_sdr(estimate, reference) - si_sdr(mixture, reference).
double si_sdri(std::span<const double> mixture, std::span<const double> estimate, std::span<const double> reference);

// Extra per-item score next to SI-SDRi (a perceptual metric, for instance).
class Metric {
 public:
  virtual ~Metric() = default;
  virtual std::string name() const = 0;
  virtual double score(std::span<const double> estimate, std::span<const double> reference,
                       std::span<const double> mixture) const = 0;
};

struct EvalRecord {
  std::string mixture_id;
  ClueCondition condition = ClueCondition::kTextAudio;
  std::optional<data::LengthClass> length_class;  // text-only
  std::optional<data::Attribute> attribute;       // text-audio
  double si_sdr_mix = 0.0;
  double si_sdr_est = 0.0;
  double si_sdri = 0.0;
  std::map<std::string, double> extra;
};

std::string record_line(const EvalRecord& r);

struct Cell {
  std::string label;
  std::size_t n = 0;
  double mean = 0.0;  // meaningless when n == 0
};

struct ConditionSummary {
  ClueCondition condition = ClueCondition::kTextAudio;
  std::vector<Cell> strata;  // empty for audio-only
  Cell average;              // item-weighted over non-empty strata
};

struct EvalReport {
  std::vector<EvalRecord> records;  // sorted by (condition, mixture_id)
  std::vector<ConditionSummary> summaries;
  std::string meta_json = "{}";

  const ConditionSummary* summary(ClueCondition c) const;
  std::string to_json() const;
  std::string to_table() const;
  void write(const std::filesystem::path& dir) const;  // report.json, report.txt, records.jsonl
};

// Groups records into strata: length class for text-only, highlighted
// attribute for text-audio, a single cell for audio-only. Input order does
// not matter.
EvalReport summarize(std::vector<EvalRecord> records);

struct EvalOptions {
  std::vector<ClueCondition> conditions{train::kConditions.begin(), train::kConditions.end()};
  std::size_t max_items = 0;  // 0: every test mixture
  std::size_t max_text_tokens = clue::kMaxTextTokens;
  std::vector<std::shared_ptr<const Metric>> metrics;
};

// Full-length extraction of one mixture under one clue condition.
EvalRecord evaluate_one(const Model& model, const clue::TextEncoder& text, data::AudioCache& cache,
                        const data::MixtureSpec& spec, ClueCondition condition, const EvalOptions& opt = {});
EvalReport evaluate(const Model& model, const clue::TextEncoder& text, data::AudioCache& cache,
                    std::span<const data::MixtureSpec> test, const EvalOptions& opt = {});

// ---- clue discrimination

// 1 when the estimate is closer (SI-SDR) to `own` than to `other`, 0.5 on a tie, else 0.
double extraction_credit(std::span<const double> estimate, std::span<const double> own,
                         std::span<const double> other);

struct CluePair {
  clue::ClueBundle for_target;
  clue::ClueBundle for_interference;
};

// Clues of the given condition naming each source in turn. The interference
// gets a Type I description of its own attributes and, for audio clues, a
// reference that shares its highlighted attribute. PairingExhausted when no
// such reference exists.
CluePair swapped_clues(const data::MixtureSpec& spec, const data::ClueTemplates& templates, data::AudioCache& cache,
                       ClueCondition condition, std::uint64_t seed, std::size_t max_text_tokens = clue::kMaxTextTokens);

struct DiscriminationResult {
  double accuracy = 0.0;
  std::size_t mixtures = 0;
  std::size_t ties = 0;
  std::size_t skipped = 0;  // no reference for the interference
};

// Extracts twice per mixture, once per clue, and credits each extraction
// that lands nearer its own source.
double discrimination_credit(const Model& model, const clue::TextEncoder& text, const data::SynthesizedMixture& mix,
                             const CluePair& clues, std::size_t* ties = nullptr);
DiscriminationResult clue_discrimination(const Model& model, const clue::TextEncoder& text, data::AudioCache& cache,
                                         const data::ClueTemplates& templates,
                                         std::span<const data::MixtureSpec> specs, ClueCondition condition,
                                         std::uint64_t seed = 0, std::size_t max_text_tokens = clue::kMaxTextTokens);

// ---- fusion ablation

struct AblationArm {
  std::string name;
  clue::FusionMode fusion = clue::FusionMode::kGated;
  clue::PoolingMode pooling = clue::PoolingMode::kAttention;
};

// gated, average, concat, gated without attention pooling
std::vector<AblationArm> default_arms();
ModelConfig arm_config(const ModelConfig& base, const AblationArm& arm);
// Top-level config keys whose values differ.
std::vector<std::string> config_diff(const ModelConfig& a, const ModelConfig& b);

// Full-scale published numbers per arm (text-audio, text-only, audio-only),
// carried as metadata for side-by-side reading only.
std::map<std::string, std::array<double, 3>> reference_ablation_values();

struct AblationBudget {
  train::TrainConfig stage1;
  train::TrainConfig stage2;
};

struct AblationRow {
  AblationArm arm;
  std::array<double, 3> sdri{};  // text-audio, text-only, audio-only
  std::array<std::size_t, 3> n{};
  std::string model_config;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  std::string meta_json = "{}";
  std::string to_json() const;
  std::string to_table() const;
};

// Trains one model per arm with the two-stage regimen (shared seeds and
// budget) under work_dir/<arm>, then evaluates every clue condition.
AblationTable run_ablation(const ModelConfig& base, std::span<const AblationArm> arms, const clue::TextEncoder& text,
                           const data::Corpus& corpus, const std::vector<data::MixtureSpec>& mixtures,
                           const AblationBudget& budget, const std::filesystem::path& work_dir,
                           const EvalOptions& opt = {},
                           const std::function<void(const std::string&)>& progress = {});

// Stage 1 into dir/stage1, stage 2 from its best checkpoint into dir/stage2.
std::pair<train::TrainResult, train::TrainResult> train_two_stage(
    Model& model, const clue::TextEncoder& text, const data::Corpus& corpus,
    const std::vector<data::MixtureSpec>& mixtures, const AblationBudget& budget, const std::filesystem::path& dir);

}  // namespace cluesep::eval
