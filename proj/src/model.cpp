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

#include "cluesep/model.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"

#include "cluesep/error.hpp"

namespace cluesep {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'C', 'S', 'E', 'P', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& where) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError(where + ": truncated checkpoint");
  return v;
}

}  // namespace

clue::ClueConfig ModelConfig::clue_config() const {
  clue::ClueConfig c;
  c.channels = sep.channels;
  c.kernel = sep.kernel;
  c.stride = sep.stride;
  c.encoder_relu = sep.encoder_relu;
  c.fusion = fusion;
  c.pooling = pooling;
  return c;
}

std::string ModelConfig::to_json() const {
  json j{{"channels", sep.channels}, {"kernel", sep.kernel},   {"stride", sep.stride},
         {"chunk", sep.chunk},       {"repeats", sep.repeats}, {"layers", sep.layers},
         {"heads", sep.heads},       {"ff_dim", sep.ff_dim},   {"encoder_relu", sep.encoder_relu},
         {"fusion", std::string(clue::fusion_name(fusion))},
         {"pooling", std::string(clue::pooling_name(pooling))},
         {"seed", seed}};
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  ModelConfig c;
  try {
    const json j = json::parse(text);
    c.sep.channels = j.value("channels", c.sep.channels);
    c.sep.kernel = j.value("kernel", c.sep.kernel);
    c.sep.stride = j.value("stride", c.sep.stride);
    c.sep.chunk = j.value("chunk", c.sep.chunk);
    c.sep.repeats = j.value("repeats", c.sep.repeats);
    c.sep.layers = j.value("layers", c.sep.layers);
    c.sep.heads = j.value("heads", c.sep.heads);
    c.sep.ff_dim = j.value("ff_dim", c.sep.ff_dim);
    c.sep.encoder_relu = j.value("encoder_relu", c.sep.encoder_relu);
    c.fusion = clue::parse_fusion(j.value("fusion", std::string("gated")));
    c.pooling = clue::parse_pooling(j.value("pooling", std::string("attention")));
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
  const clue::ClueConfig cc = cfg.clue_config();
  cfg_.sep.clue_dim = cc.output_dim();
  clue_ = std::make_unique<clue::ClueNetwork>(cc, params_, cfg.seed);
  sep_ = std::make_unique<sep::Separator>(cfg_.sep, params_, cfg.seed);
}

num::Var Model::conditioning(const clue::ClueBundle& bundle, const clue::TextEncoder& text) const {
  return clue_->forward(bundle, text);
}

num::Var Model::extract(std::span<const double> mixture, const clue::ClueBundle& bundle,
                        const clue::TextEncoder& text) const {
  return sep_->forward(mixture, conditioning(bundle, text));
}

dsp::Waveform Model::extract_waveform(const dsp::Waveform& mixture, const clue::ClueBundle& bundle,
                                      const clue::TextEncoder& text) const {
  const num::Var y = extract(mixture.samples, bundle, text);
  dsp::Waveform out;
  out.sample_rate = mixture.sample_rate;
  const auto v = y.value().values();
  out.samples.assign(v.begin(), v.end());
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kVersion);
    put<std::uint64_t>(out, ckpt.meta_json.size());
    out.write(ckpt.meta_json.data(), static_cast<std::streamsize>(ckpt.meta_json.size()));
    put<std::uint64_t>(out, ckpt.tensors.size());
    for (const auto& [name, t] : ckpt.tensors) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
      for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
      out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!out) throw DataError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const std::string where = path.string();
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw FormatError(where + ": not a checkpoint");
  const auto version = get<std::uint32_t>(in, where);
  if (version != kVersion) throw FormatError(where + ": unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.meta_json.resize(get<std::uint64_t>(in, where));
  if (!in.read(ck.meta_json.data(), static_cast<std::streamsize>(ck.meta_json.size())))
    throw FormatError(where + ": truncated checkpoint");
  const auto count = get<std::uint64_t>(in, where);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name(get<std::uint32_t>(in, where), '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(name.size()))) throw FormatError(where + ": truncated checkpoint");
    num::Shape shape(get<std::uint32_t>(in, where));
    for (auto& d : shape) d = get<std::uint64_t>(in, where);
    num::Tensor t(shape);
    if (!in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double))))
      throw FormatError(where + ": truncated tensor " + name);
    ck.tensors.emplace(std::move(name), std::move(t));
  }
  return ck;
}

Checkpoint model_checkpoint(const Model& model, const std::string& extra_meta_json) {
  Checkpoint ck;
  json meta = json::parse(extra_meta_json);
  meta["model"] = json::parse(model.config().to_json());
  ck.meta_json = meta.dump();
  for (const auto& p : model.params().items()) ck.tensors.emplace(p.name(), p.value());
  return ck;
}

void restore_parameters(Model& model, const Checkpoint& ckpt) {
  for (auto& p : model.params().items()) {
    auto it = ckpt.tensors.find(p.name());
    if (it == ckpt.tensors.end()) throw FormatError("checkpoint lacks parameter " + p.name());
    if (it->second.shape() != p.shape()) {
      throw FormatError("checkpoint parameter " + p.name() + " has shape " + num::shape_str(it->second.shape()) +
                        ", model expects " + num::shape_str(p.shape()));
    }
    p.mutable_value() = it->second;
  }
}

std::unique_ptr<Model> load_model(const std::filesystem::path& path) {
  const Checkpoint ck = load_checkpoint(path);
  json meta;
  try {
    meta = json::parse(ck.meta_json);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": bad metadata: " + e.what());
  }
  if (!meta.contains("model")) throw FormatError(path.string() + ": no model config in metadata");
  auto model = std::make_unique<Model>(ModelConfig::from_json(meta["model"].dump()));
  restore_parameters(*model, ck);
  return model;
}

}  // namespace cluesep
