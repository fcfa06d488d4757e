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

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cluesep/clue.hpp"
#include "cluesep/separator.hpp"

namespace cluesep {

struct ModelConfig {
  sep::SepConfig sep;
  clue::FusionMode fusion = clue::FusionMode::kGated;
  clue::PoolingMode pooling = clue::PoolingMode::kAttention;
  std::uint64_t seed = 0;

  clue::ClueConfig clue_config() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

// Clue network plus separator over one parameter set.
class Model {
 public:
  explicit Model(const ModelConfig& cfg);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  num::ParameterSet& params() { return params_; }
  const num::ParameterSet& params() const { return params_; }
  const clue::ClueNetwork& clue() const { return *clue_; }
  const sep::Separator& separator() const { return *sep_; }

  num::Var conditioning(const clue::ClueBundle& bundle, const clue::TextEncoder& text) const;
  // Differentiable estimate, same length as the mixture.
  num::Var extract(std::span<const double> mixture, const clue::ClueBundle& bundle,
                   const clue::TextEncoder& text) const;
  dsp::Waveform extract_waveform(const dsp::Waveform& mixture, const clue::ClueBundle& bundle,
                                 const clue::TextEncoder& text) const;

 private:
  ModelConfig cfg_;
  num::ParameterSet params_;
  std::unique_ptr<clue::ClueNetwork> clue_;
  std::unique_ptr<sep::Separator> sep_;
};

// Binary checkpoint: magic, version, JSON metadata, named fp64 tensors.
struct Checkpoint {
  std::string meta_json;
  std::map<std::string, num::Tensor> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Parameters go under their own names; meta holds {"model": config, ...extra}.
Checkpoint model_checkpoint(const Model& model, const std::string& extra_meta_json = "{}");
// Copies stored values into the model (FormatError on a missing name or shape).
void restore_parameters(Model& model, const Checkpoint& ckpt);
std::unique_ptr<Model> load_model(const std::filesystem::path& path);

}  // namespace cluesep
