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

#include "cluesep/clue.hpp"

#include <spdlog/spdlog.h>

#include <cctype>
#include <fstream>

#include "json.hpp"

#include "cluesep/error.hpp"
#include "cluesep/ops.hpp"
#include "cluesep/rng.hpp"

namespace cluesep::clue {

using num::Shape;
using num::Tensor;
using num::Var;

Tokens tokenize(std::string_view text, std::size_t max_tokens) {
  Tokens out;
  std::string cur;
  auto flush = [&] {
    if (cur.empty()) return;
    if (out.tokens.size() < max_tokens) {
      out.tokens.push_back(cur);
    } else {
      out.truncated = true;
    }
    cur.clear();
  };
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else {
      flush();
    }
  }
  flush();
  if (out.truncated) spdlog::warn("clue text truncated to {} tokens: \"{}\"", max_tokens, text);
  return out;
}

Tensor HashTextEncoder::token_vector(const std::string& token) const {
  Rng rng(derive_seed(seed_, {fnv1a(token)}));
  Tensor v({kTextDim});
  for (auto& x : v.values()) x = rng.normal();
  return v;
}

Tensor HashTextEncoder::encode(std::string_view text) const {
  const std::string key(text);
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
  }
  const Tokens tok = tokenize(text);
  if (tok.tokens.empty()) throw InputError("empty clue text");
  Tensor out({kTextDim}, 0.0);
  for (const auto& t : tok.tokens) {
    const Tensor v = token_vector(t);
    for (std::size_t i = 0; i < kTextDim; ++i) out[i] += v[i];
  }
  for (auto& x : out.values()) x /= static_cast<double>(tok.tokens.size());
  std::lock_guard<std::mutex> lock(mu_);
  cache_.emplace(key, out);
  return out;
}

PrecomputedTextEncoder PrecomputedTextEncoder::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open text embeddings " + path.string());
  PrecomputedTextEncoder enc;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      auto vec = j.at("vector").get<std::vector<double>>();
      if (vec.size() != kTextDim) {
        throw FormatError(path.string() + ":" + std::to_string(lineno) + ": vector has " +
                          std::to_string(vec.size()) + " entries, expected 768");
      }
      enc.table_[j.at("text").get<std::string>()] = Tensor({kTextDim}, std::move(vec));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return enc;
}

Tensor PrecomputedTextEncoder::encode(std::string_view text) const {
  if (tokenize(text).tokens.empty()) throw InputError("empty clue text");
  auto it = table_.find(std::string(text));
  if (it == table_.end()) throw LookupError("no precomputed embedding for \"" + std::string(text) + "\"");
  return it->second;
}

std::string_view fusion_name(FusionMode m) {
  switch (m) {
    case FusionMode::kGated: return "gated";
    case FusionMode::kAverage: return "average";
    case FusionMode::kConcat: return "concat";
  }
  return "?";
}

FusionMode parse_fusion(std::string_view name) {
  for (FusionMode m : {FusionMode::kGated, FusionMode::kAverage, FusionMode::kConcat})
    if (fusion_name(m) == name) return m;
  throw ConfigError("unknown fusion mode '" + std::string(name) + "' (gated|average|concat)");
}

std::string_view pooling_name(PoolingMode m) { return m == PoolingMode::kAttention ? "attention" : "mean"; }

PoolingMode parse_pooling(std::string_view name) {
  if (name == "attention") return PoolingMode::kAttention;
  if (name == "mean") return PoolingMode::kMean;
  throw ConfigError("unknown pooling mode '" + std::string(name) + "' (attention|mean)");
}

Var attention_pool(const Var& A, const Var& u, const Var& b) {
  const std::size_t f = A.dim(0), t = A.dim(1);
  Var scores = num::affine(num::transpose(A), u, b);  // [T x 1]
  Var w = num::softmax(num::reshape(scores, {t}), 0);
  return num::reshape(num::bmm(A, num::reshape(w, {t, 1})), {f});
}

Var mean_pool(const Var& A) {
  const std::size_t f = A.dim(0), t = A.dim(1);
  return num::reshape(num::bmm(A, num::constant(Tensor({t, 1}, 1.0 / static_cast<double>(t)))), {f});
}

Var project_clue(const Var& v, const Var& weight, const Var& bias) {
  return num::layer_norm(num::relu(num::affine(v, weight, bias)), 0);
}

Var gated_fuse(const Var& c_a, const Var& c_t, const Var& weight, const Var& bias) {
  Var g = num::sigmoid(num::affine(num::concat(c_a, c_t), weight, bias));
  return num::add(c_t, num::mul(g, num::sub(c_a, c_t)));
}

Var fuse_alternative(FusionMode mode, const Var& c_a, const Var& c_t, bool audio_is_placeholder) {
  switch (mode) {
    case FusionMode::kAverage:
      return audio_is_placeholder ? c_t : num::scale(num::add(c_a, c_t), 0.5);
    case FusionMode::kConcat:
      return num::concat(c_a, c_t);
    case FusionMode::kGated:
      break;
  }
  throw ConfigError("fuse_alternative: gated fusion needs gate parameters");
}

ClueNetwork::ClueNetwork(const ClueConfig& cfg, num::ParameterSet& params, std::uint64_t seed) : cfg_(cfg) {
  const std::size_t f = cfg.channels, e = cfg.embed_dim;
  kernel_ = params.add_uniform(cfg.encoder_prefix + ".kernel", {f, 1, cfg.kernel}, cfg.kernel, seed);
  if (cfg.pooling == PoolingMode::kAttention) {
    pool_u_ = params.add_uniform("clue.pool.u", {1, f}, f, seed);
    pool_b_ = params.add_constant("clue.pool.b", {1}, 0.0);
  }
  audio_w_ = params.add_uniform("clue.audio_proj.weight", {e, f}, f, seed);
  audio_b_ = params.add_uniform("clue.audio_proj.bias", {e}, f, seed);
  text_w_ = params.add_uniform("clue.text_proj.weight", {e, kTextDim}, kTextDim, seed);
  text_b_ = params.add_uniform("clue.text_proj.bias", {e}, kTextDim, seed);
  if (cfg.fusion == FusionMode::kGated) {
    gate_w_ = params.add_uniform("clue.gate.weight", {e, 2 * e}, 2 * e, seed);
    gate_b_ = params.add_constant("clue.gate.bias", {e}, 0.0);
  }
}

Var ClueNetwork::encode_audio(std::span<const double> audio) const {
  if (audio.size() < cfg_.kernel) {
    throw InputError("clue audio has " + std::to_string(audio.size()) + " samples, shorter than one kernel (" +
                     std::to_string(cfg_.kernel) + ")");
  }
  Var x = num::constant(Tensor({1, audio.size()}, std::vector<double>(audio.begin(), audio.end())));
  Var a = num::conv1d(x, kernel_.var(), cfg_.stride);
  return cfg_.encoder_relu ? num::relu(a) : a;
}

Var ClueNetwork::pool(const Var& A) const {
  return cfg_.pooling == PoolingMode::kAttention ? attention_pool(A, pool_u_.var(), pool_b_.var()) : mean_pool(A);
}

Var ClueNetwork::project_audio(const Var& pooled) const { return project_clue(pooled, audio_w_.var(), audio_b_.var()); }

Var ClueNetwork::project_text(const Tensor& raw) const {
  return project_clue(num::constant(raw), text_w_.var(), text_b_.var());
}

Var ClueNetwork::fuse(const Var& c_a, const Var& c_t, bool audio_is_placeholder) const {
  if (cfg_.fusion == FusionMode::kGated) return gated_fuse(c_a, c_t, gate_w_.var(), gate_b_.var());
  return fuse_alternative(cfg_.fusion, c_a, c_t, audio_is_placeholder);
}

Var ClueNetwork::forward(const ClueBundle& bundle, const TextEncoder& text) const {
  if (!bundle.audio && !bundle.text) throw InputError("clue bundle has neither audio nor text");
  const bool placeholder = !bundle.audio.has_value();
  Var c_a = placeholder ? num::constant(Tensor({cfg_.embed_dim}, 0.0))
                        : project_audio(pool(encode_audio(bundle.audio->samples)));
  Var c_t = project_text(text.encode(bundle.text ? *bundle.text : cfg_.pseudo_text));
  return fuse(c_a, c_t, placeholder);
}

}  // namespace cluesep::clue
