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
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cluesep/audio.hpp"
#include "cluesep/autograd.hpp"

namespace cluesep::clue {

inline constexpr std::size_t kTextDim = 768;
inline constexpr std::size_t kMaxTextTokens = 20;
inline constexpr std::size_t kClueDim = 256;
inline constexpr const char* kPseudoText = "Extract the same speaker.";

struct Tokens {
  std::vector<std::string> tokens;
  bool truncated = false;
};

// Lower-cased alphanumeric runs, capped at max_tokens (warning on truncation).
Tokens tokenize(std::string_view text, std::size_t max_tokens = kMaxTextTokens);

// Frozen text encoder port. Implementations hold no trainable parameters.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  // [768] embedding; InputError on empty text.
  virtual num::Tensor encode(std::string_view text) const = 0;
  virtual std::string name() const = 0;
};

// Deterministic fallback: every token maps to a fixed pseudo-random vector
// (seeded by its hash); the sentence embedding is the mean over tokens.
class HashTextEncoder final : public TextEncoder {
 public:
  explicit HashTextEncoder(std::uint64_t seed = 0x7e47ULL) : seed_(seed) {}
  num::Tensor encode(std::string_view text) const override;
  std::string name() const override { return "hash"; }
  num::Tensor token_vector(const std::string& token) const;

 private:
  std::uint64_t seed_;
  mutable std::mutex mu_;
  mutable std::unordered_map<std::string, num::Tensor> cache_;
};

// Sidecar JSONL of {"text": ..., "vector": [768 numbers]} produced by any
// external sentence encoder. Unknown strings raise LookupError.
class PrecomputedTextEncoder final : public TextEncoder {
 public:
  static PrecomputedTextEncoder load(const std::filesystem::path& path);
  num::Tensor encode(std::string_view text) const override;
  std::string name() const override { return "precomputed"; }
  std::size_t size() const { return table_.size(); }

 private:
  std::unordered_map<std::string, num::Tensor> table_;
};

enum class FusionMode { kGated, kAverage, kConcat };
enum class PoolingMode { kAttention, kMean };

std::string_view fusion_name(FusionMode m);
FusionMode parse_fusion(std::string_view name);
std::string_view pooling_name(PoolingMode m);
PoolingMode parse_pooling(std::string_view name);

struct ClueConfig {
  std::size_t channels = 64;  // F, matches the mixture encoder
  std::size_t kernel = 16;
  std::size_t stride = 8;
  bool encoder_relu = true;
  std::size_t embed_dim = kClueDim;  // F'
  FusionMode fusion = FusionMode::kGated;
  PoolingMode pooling = PoolingMode::kAttention;
  std::string encoder_prefix = "clue.encoder";
  std::string pseudo_text = kPseudoText;

  // Width of the conditioning vector handed to the separator.
  std::size_t output_dim() const { return fusion == FusionMode::kConcat ? 2 * embed_dim : embed_dim; }
};

// Either modality may be missing, not both.
struct ClueBundle {
  std::optional<dsp::Waveform> audio;
  std::optional<std::string> text;
};

// score_t = u . A[:, t] + b, w = softmax(score), returns sum_t w_t A[:, t].
// A is [F x T], u is [1 x F], b is [1].
num::Var attention_pool(const num::Var& A, const num::Var& u, const num::Var& b);
num::Var mean_pool(const num::Var& A);
// affine -> relu -> layer_norm
num::Var project_clue(const num::Var& v, const num::Var& weight, const num::Var& bias);
// g = sigmoid(W [c_A ; c_T] + b); g * c_A + (1 - g) * c_T
num::Var gated_fuse(const num::Var& c_a, const num::Var& c_t, const num::Var& weight, const num::Var& bias);
// average -> (c_A + c_T) / 2, or c_T alone for a zero audio placeholder; concat -> [c_A ; c_T]
num::Var fuse_alternative(FusionMode mode, const num::Var& c_a, const num::Var& c_t, bool audio_is_placeholder);

class ClueNetwork {
 public:
  ClueNetwork(const ClueConfig& cfg, num::ParameterSet& params, std::uint64_t seed);

  const ClueConfig& config() const { return cfg_; }
  num::Var encode_audio(std::span<const double> audio) const;  // [F x T_a]
  num::Var pool(const num::Var& A) const;                      // [F]
  num::Var project_audio(const num::Var& pooled) const;        // [F']
  num::Var project_text(const num::Tensor& raw) const;         // [F']
  num::Var fuse(const num::Var& c_a, const num::Var& c_t, bool audio_is_placeholder) const;

  // Resolves missing modalities (zero audio embedding, pseudo-text) and fuses.
  num::Var forward(const ClueBundle& bundle, const TextEncoder& text) const;

 private:
  ClueConfig cfg_;
  num::Parameter kernel_, pool_u_, pool_b_, audio_w_, audio_b_, text_w_, text_b_, gate_w_, gate_b_;
};

}  // namespace cluesep::clue
