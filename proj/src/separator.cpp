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

#include "cluesep/separator.hpp"

#include <cmath>
#include <string>

#include "cluesep/error.hpp"

namespace cluesep::sep {

using num::Shape;
using num::Tensor;
using num::Var;

void SepConfig::validate() const {
  if (channels == 0 || kernel == 0 || stride == 0) throw ConfigError("separator: channels, kernel, stride must be > 0");
  if (stride > kernel) throw ConfigError("separator: stride " + std::to_string(stride) + " exceeds kernel " + std::to_string(kernel));
  if (chunk < 2 || chunk % 2 != 0) throw ConfigError("separator: chunk size must be even, got " + std::to_string(chunk));
  if (repeats == 0 || layers == 0) throw ConfigError("separator: repeats and layers must be > 0");
  if (heads == 0 || channels % heads != 0) throw ConfigError("separator: channels not divisible by heads");
  if (ff_dim == 0 || clue_dim == 0) throw ConfigError("separator: ff_dim and clue_dim must be > 0");
}

std::size_t chunk_count(std::size_t frames, std::size_t chunk) {
  const std::size_t hop = chunk / 2;
  if (frames <= chunk) return 1;
  return (frames - chunk + hop - 1) / hop + 1;
}

Chunked chunk(const Var& h, std::size_t c) {
  if (h.value().rank() != 2) throw DimensionError("chunk: expected [F x T], got " + num::shape_str(h.shape()));
  if (c < 2 || c % 2 != 0) throw ConfigError("chunk: size must be even, got " + std::to_string(c));
  const std::size_t f = h.dim(0), t = h.dim(1), hop = c / 2, n = chunk_count(t, c);
  Tensor out({n, c, f}, 0.0);
  const auto& hv = h.value();
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t pos = k * hop + j;
      if (pos >= t) break;
      double* dst = out.data() + (k * c + j) * f;
      for (std::size_t i = 0; i < f; ++i) dst[i] = hv[i * t + pos];
    }
  Var data = num::make_result(std::move(out), {h}, "chunk", [f, t, c, hop, n](num::Node& node) {
    auto& g = node.inputs[0]->grad_buffer();
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t j = 0; j < c; ++j) {
        const std::size_t pos = k * hop + j;
        if (pos >= t) break;
        const double* src = node.grad.data() + (k * c + j) * f;
        for (std::size_t i = 0; i < f; ++i) g[i * t + pos] += src[i];
      }
  });
  return {data, t};
}

Var unchunk(const Chunked& r) {
  const auto& dv = r.data.value();
  if (dv.rank() != 3) throw DimensionError("unchunk: expected [N_C x C x F], got " + num::shape_str(dv.shape()));
  const std::size_t n = dv.dim(0), c = dv.dim(1), f = dv.dim(2), hop = c / 2, t = r.original_frames;
  std::vector<double> inv(t, 0.0);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < c && k * hop + j < t; ++j) inv[k * hop + j] += 1.0;
  for (double& v : inv) {
    if (v == 0.0) throw DimensionError("unchunk: frame not covered by any chunk");
    v = 1.0 / v;
  }
  Tensor out({f, t}, 0.0);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t pos = k * hop + j;
      if (pos >= t) break;
      const double* src = dv.data() + (k * c + j) * f;
      for (std::size_t i = 0; i < f; ++i) out[i * t + pos] += src[i] * inv[pos];
    }
  return num::make_result(std::move(out), {r.data}, "unchunk", [n, c, f, hop, t, inv](num::Node& node) {
    auto& g = node.inputs[0]->grad_buffer();
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t j = 0; j < c; ++j) {
        const std::size_t pos = k * hop + j;
        if (pos >= t) break;
        double* dst = g.data() + (k * c + j) * f;
        for (std::size_t i = 0; i < f; ++i) dst[i] += node.grad[i * t + pos] * inv[pos];
      }
  });
}

Tensor positional_encoding(std::size_t len, std::size_t dim) {
  Tensor pe({len, dim});
  for (std::size_t p = 0; p < len; ++p)
    for (std::size_t i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(dim));
      pe[p * dim + i] = i % 2 == 0 ? std::sin(p * rate) : std::cos(p * rate);
    }
  return pe;
}

namespace {

Var norm(const Var& x, const num::Parameter& gain, const num::Parameter& bias) {
  return num::add_bias(num::mul_bias(num::layer_norm(x, x.value().rank() - 1), gain.var()), bias.var());
}

TransformerLayerParams make_layer(num::ParameterSet& ps, const std::string& prefix, const SepConfig& cfg,
                                  std::uint64_t seed) {
  const std::size_t f = cfg.channels;
  TransformerLayerParams p;
  p.ln1_gain = ps.add_constant(prefix + ".ln1.gain", {f}, 1.0);
  p.ln1_bias = ps.add_constant(prefix + ".ln1.bias", {f}, 0.0);
  p.attention = num::make_attention_params(ps, prefix + ".attn", f, seed);
  p.ln2_gain = ps.add_constant(prefix + ".ln2.gain", {f}, 1.0);
  p.ln2_bias = ps.add_constant(prefix + ".ln2.bias", {f}, 0.0);
  p.ff1_w = ps.add_uniform(prefix + ".ff1.weight", {cfg.ff_dim, f}, f, seed);
  p.ff1_b = ps.add_uniform(prefix + ".ff1.bias", {cfg.ff_dim}, f, seed);
  p.ff2_w = ps.add_uniform(prefix + ".ff2.weight", {f, cfg.ff_dim}, cfg.ff_dim, seed);
  p.ff2_b = ps.add_uniform(prefix + ".ff2.bias", {f}, cfg.ff_dim, seed);
  return p;
}

StageParams make_stage(num::ParameterSet& ps, const std::string& prefix, const SepConfig& cfg, std::uint64_t seed) {
  StageParams s;
  for (std::size_t l = 0; l < cfg.layers; ++l) s.layers.push_back(make_layer(ps, prefix + ".layer" + std::to_string(l), cfg, seed));
  s.norm_gain = ps.add_constant(prefix + ".norm.gain", {cfg.channels}, 1.0);
  s.norm_bias = ps.add_constant(prefix + ".norm.bias", {cfg.channels}, 0.0);
  return s;
}

}  // namespace

Var transformer_layer(const Var& x, const TransformerLayerParams& p, std::size_t heads) {
  Var y = norm(x, p.ln1_gain, p.ln1_bias);
  Var z = num::add(x, num::multi_head_attention(y, y, y, heads, p.attention));
  Var ff = num::affine(num::relu(num::affine(norm(z, p.ln2_gain, p.ln2_bias), p.ff1_w.var(), p.ff1_b.var())),
                       p.ff2_w.var(), p.ff2_b.var());
  return num::add(z, ff);
}

Var transformer_stage(const Var& x, const StageParams& p, std::size_t heads) {
  const std::size_t b = x.dim(0), s = x.dim(1), f = x.dim(2);
  const Tensor pe = positional_encoding(s, f);
  Tensor full({b, s, f});
  for (std::size_t i = 0; i < b; ++i) std::copy_n(pe.data(), s * f, full.data() + i * s * f);
  Var y = num::add(x, num::constant(std::move(full)));
  for (const auto& layer : p.layers) y = transformer_layer(y, layer, heads);
  return num::add(norm(y, p.norm_gain, p.norm_bias), x);
}

Separator::Separator(const SepConfig& cfg, num::ParameterSet& ps, std::uint64_t seed) : cfg_(cfg) {
  cfg.validate();
  const std::size_t f = cfg.channels;
  encoder_ = ps.add_uniform("sep.encoder.kernel", {f, 1, cfg.kernel}, cfg.kernel, seed);
  for (std::size_t r = 0; r < cfg.repeats; ++r) {
    const std::string p = "sep.block" + std::to_string(r);
    inject_w_.push_back(ps.add_uniform(p + ".inject.weight", {f, cfg.clue_dim}, cfg.clue_dim, seed));
    inject_b_.push_back(ps.add_uniform(p + ".inject.bias", {f}, cfg.clue_dim, seed));
    intra_.push_back(make_stage(ps, p + ".intra", cfg, seed));
    inter_.push_back(make_stage(ps, p + ".inter", cfg, seed));
  }
  head_w_ = ps.add_uniform("sep.mask.weight", {f, f}, f, seed);
  head_b_ = ps.add_uniform("sep.mask.bias", {f}, f, seed);
  decoder_ = ps.add_uniform("sep.decoder.kernel", {f, 1, cfg.kernel}, f, seed);
  num::check_mirrored({cfg.kernel, cfg.stride}, {decoder_.shape()[2], cfg.stride});
}

std::size_t Separator::padded_length(std::size_t length) const {
  if (length <= cfg_.kernel) return cfg_.kernel;
  const std::size_t frames = (length - cfg_.kernel + cfg_.stride - 1) / cfg_.stride + 1;
  return (frames - 1) * cfg_.stride + cfg_.kernel;
}

Var Separator::encode(std::span<const double> x) const {
  if (x.size() < cfg_.kernel) {
    throw InputError("mixture has " + std::to_string(x.size()) + " samples, shorter than the encoder kernel");
  }
  Var in = num::constant(Tensor({1, x.size()}, std::vector<double>(x.begin(), x.end())));
  Var h = num::conv1d(in, encoder_.var(), cfg_.stride);
  return cfg_.encoder_relu ? num::relu(h) : h;
}

Var Separator::inject(const Var& data, const Var& clue, std::size_t repeat) const {
  return num::add_bias(data, num::affine(clue, inject_w_.at(repeat).var(), inject_b_.at(repeat).var()));
}

Var Separator::intra(const Var& data, std::size_t repeat) const {
  return transformer_stage(data, intra_.at(repeat), cfg_.heads);
}

Var Separator::inter(const Var& data, std::size_t repeat) const {
  Var t = num::permute(data, {1, 0, 2});
  return num::permute(transformer_stage(t, inter_.at(repeat), cfg_.heads), {1, 0, 2});
}

Var Separator::dual_path(const Var& data, std::size_t repeat) const { return inter(intra(data, repeat), repeat); }

Var Separator::make_mask(const Chunked& r) const {
  const auto& s = r.data.shape();
  Var m = num::affine(num::relu(r.data), head_w_.var(), head_b_.var());
  m = num::reshape(m, {s[0], s[1], 1, s[2]});  // one source
  m = num::reshape(m, {s[0], s[1], s[2]});
  return num::relu(unchunk({m, r.original_frames}));
}

Var Separator::mask(const Var& h, const Var& clue) const {
  Chunked r = chunk(h, cfg_.chunk);
  for (std::size_t i = 0; i < cfg_.repeats; ++i) r.data = dual_path(inject(r.data, clue, i), i);
  return make_mask(r);
}

Var Separator::decode(const Var& masked, std::size_t length) const {
  Var y = num::conv_transpose1d(masked, decoder_.var(), cfg_.stride);
  return num::reshape(num::fit_length(y, length), {length});
}

Var Separator::forward(std::span<const double> x, const Var& clue) const {
  std::vector<double> padded(x.begin(), x.end());
  padded.resize(padded_length(x.size()), 0.0);
  Var h = encode(padded);
  return decode(num::mul(mask(h, clue), h), x.size());
}

}  // namespace cluesep::sep
