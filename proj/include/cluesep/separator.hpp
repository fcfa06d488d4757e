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
#include <span>
#include <vector>

#include "cluesep/autograd.hpp"
#include "cluesep/ops.hpp"

namespace cluesep::sep {

struct SepConfig {
  std::size_t channels = 64;  // F
  std::size_t kernel = 16;    // K
  std::size_t stride = 8;
  std::size_t chunk = 50;  // C, even; hop is C/2
  std::size_t repeats = 2;
  std::size_t layers = 1;  // transformer layers per Intra/Inter stage
  std::size_t heads = 4;
  std::size_t ff_dim = 256;
  std::size_t clue_dim = 256;  // width of the conditioning vector
  bool encoder_relu = true;

  void validate() const;  // ConfigError
};

// Chunked representation, laid out [N_C x C x F] so that Intra attention runs
// over the middle axis with chunks as the batch.
struct Chunked {
  num::Var data;
  std::size_t original_frames = 0;
};

std::size_t chunk_count(std::size_t frames, std::size_t chunk);
// h is [F x T]; zero-padded to fit N_C = ceil((T - C) / hop) + 1 frames.
Chunked chunk(const num::Var& h, std::size_t chunk_size);
// Overlap-add divided by the per-position overlap count, cropped to T.
num::Var unchunk(const Chunked& r);

// Sinusoidal positional table [len x dim].
num::Tensor positional_encoding(std::size_t len, std::size_t dim);

struct TransformerLayerParams {
  num::Parameter ln1_gain, ln1_bias, ln2_gain, ln2_bias;
  num::AttentionParams attention;
  num::Parameter ff1_w, ff1_b, ff2_w, ff2_b;
};

struct StageParams {
  std::vector<TransformerLayerParams> layers;
  num::Parameter norm_gain, norm_bias;
};

// Pre-norm layer on [B x S x F]: x + MHA(LN(x)), then + FF(LN(.)).
num::Var transformer_layer(const num::Var& x, const TransformerLayerParams& p, std::size_t heads);
// Positional encoding, layers, final norm, residual around the stage.
num::Var transformer_stage(const num::Var& x, const StageParams& p, std::size_t heads);

class Separator {
 public:
  Separator(const SepConfig& cfg, num::ParameterSet& params, std::uint64_t seed);

  const SepConfig& config() const { return cfg_; }

  // Length the input is padded to so that the encoder frames tile it exactly.
  std::size_t padded_length(std::size_t length) const;
  num::Var encode(std::span<const double> x) const;  // [F x T], x already padded
  // Adds the per-repeat clue projection at the start of each Intra stage.
  num::Var inject(const num::Var& data, const num::Var& clue, std::size_t repeat) const;
  num::Var dual_path(const num::Var& data, std::size_t repeat) const;
  num::Var intra(const num::Var& data, std::size_t repeat) const;
  num::Var inter(const num::Var& data, std::size_t repeat) const;
  // Mask head with a singleton source axis, overlap-add, ReLU: [F x T].
  num::Var make_mask(const Chunked& r) const;
  num::Var mask(const num::Var& h, const num::Var& clue) const;
  num::Var decode(const num::Var& masked, std::size_t length) const;  // [length]

  // Waveform in, estimate of the same length out.
  num::Var forward(std::span<const double> x, const num::Var& clue) const;

 private:
  SepConfig cfg_;
  num::Parameter encoder_, decoder_, head_w_, head_b_;
  std::vector<num::Parameter> inject_w_, inject_b_;
  std::vector<StageParams> intra_, inter_;
};

}  // namespace cluesep::sep
