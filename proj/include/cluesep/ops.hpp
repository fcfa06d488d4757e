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
#include <optional>
#include <string>
#include <vector>

#include "cluesep/autograd.hpp"

namespace cluesep::num {

inline constexpr double kLayerNormEps = 1e-5;

Var constant(Tensor t);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);

// x[..., D] (+|*) v[D], v broadcast over every leading axis.
Var add_bias(const Var& x, const Var& bias);
Var mul_bias(const Var& x, const Var& gain);

// weight[D_out x D_in] applied to the last axis of x[..., D_in], plus bias[D_out].
// An undefined bias Var means no bias.
Var affine(const Var& x, const Var& weight, const Var& bias = Var());

// Batched matrix product on rank-2 or rank-3 operands:
// alpha * op(a) * op(b), op = transpose when the flag is set.
Var bmm(const Var& a, const Var& b, bool transpose_a = false, bool transpose_b = false, double alpha = 1.0);

enum class Elementwise { kRelu, kSigmoid, kSoftmax, kLayerNorm };

Var relu(const Var& x);
Var sigmoid(const Var& x);
Var softmax(const Var& x, std::size_t axis);
// Plain normalization (no gain/bias) along `axis`.
Var layer_norm(const Var& x, std::size_t axis, double eps = kLayerNormEps);
// softmax and layer_norm need an axis; relu and sigmoid ignore it.
Var elementwise(Elementwise kind, const Var& x, std::optional<std::size_t> axis = std::nullopt);

Var reshape(const Var& x, Shape shape);
Var permute(const Var& x, const std::vector<std::size_t>& perm);
Var transpose(const Var& x);  // rank 2

// Concatenate along the last axis; leading extents must agree.
Var concat(const Var& a, const Var& b);

Var sum(const Var& x);
Var mean(const Var& x);

// Valid 1-D convolution. input[F_in x T], kernel[F_out x F_in x K] -> [F_out x T'],
// T' = floor((T - K) / stride) + 1.
Var conv1d(const Var& input, const Var& kernel, std::size_t stride);

// Transposed 1-D convolution. input[F_in x T'], kernel[F_in x F_out x K] ->
// [F_out x ((T' - 1) * stride + K)], cropped or zero-padded to output_length when given.
Var conv_transpose1d(const Var& input, const Var& kernel, std::size_t stride,
                     std::optional<std::size_t> output_length = std::nullopt);

struct ConvGeometry {
  std::size_t kernel = 0;
  std::size_t stride = 0;
};

// ConfigError unless the decoder mirrors the encoder's kernel size and stride.
void check_mirrored(const ConvGeometry& encoder, const ConvGeometry& decoder);

// Crop or zero-pad the last axis to `length`.
Var fit_length(const Var& x, std::size_t length);

struct AttentionParams {
  Parameter wq, bq, wk, bk, wv, bv, wo, bo;
};

AttentionParams make_attention_params(ParameterSet& set, const std::string& prefix, std::size_t dim,
                                      std::uint64_t seed);

// Scaled dot-product attention per head over q,k,v of shape [T x D] or [B x T x D],
// heads concatenated and output-projected. No causal mask.
Var multi_head_attention(const Var& q, const Var& k, const Var& v, std::size_t heads,
                         const AttentionParams& params);

}  // namespace cluesep::num
