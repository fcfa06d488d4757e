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

#include <spdlog/spdlog.h>

#include <array>
#include <cmath>

#include "cluesep/dataset.hpp"
#include "cluesep/error.hpp"

namespace cluesep::data {

namespace {

constexpr std::array<const char*, 6> kEmotions = {"neutral", "happy", "sad", "angry", "surprised", "shocked"};
constexpr std::array<const char*, 3> kPitches = {"high", "neutral", "low"};
constexpr std::array<const char*, 3> kTempos = {"fast", "neutral", "slow"};
constexpr std::array<const char*, 4> kAccents = {"american", "british", "indian", "australian"};

constexpr int kHarmonics = 10;

struct EmotionCode {
  double vibrato_depth, vibrato_hz, tilt_shift, tremolo;
};

EmotionCode emotion_code(const std::string& e) {
  if (e == "happy") return {0.025, 5.0, -0.15, 0.10};
  if (e == "sad") return {0.010, 3.0, 0.25, 0.05};
  if (e == "angry") return {0.020, 7.0, -0.30, 0.20};
  if (e == "surprised") return {0.045, 4.0, -0.10, 0.10};
  if (e == "shocked") return {0.060, 6.0, 0.00, 0.25};
  return {0.0, 0.0, 0.0, 0.0};
}

double f0_band(const std::string& pitch, Rng& rng) {
  if (pitch == "high") return rng.uniform(285.0, 315.0);
  if (pitch == "low") return rng.uniform(95.0, 110.0);
  return rng.uniform(165.0, 185.0);
}

double syllable_rate(const std::string& tempo) {
  if (tempo == "slow") return 2.5;
  if (tempo == "fast") return 6.0;
  return 4.0;
}

std::size_t accent_index(const std::string& accent) {
  for (std::size_t i = 0; i < kAccents.size(); ++i)
    if (accent == kAccents[i]) return i;
  return fnv1a(accent) % kAccents.size();
}

}  // namespace

ToyVariation parse_toy_variation(std::string_view name) {
  if (name == "full") return ToyVariation::kFull;
  if (name == "pitch-families") return ToyVariation::kPitchFamilies;
  throw ConfigError("unknown corpus variation '" + std::string(name) + "' (full|pitch-families)");
}

std::vector<UtteranceRecord> plan_toy_corpus(const ToyCorpusConfig& cfg) {
  if (cfg.n_speakers < 2) throw ConfigError("synthetic corpus needs at least 2 speakers");
  if (cfg.min_duration_s > cfg.max_duration_s) throw ConfigError("min duration above max duration");
  std::vector<UtteranceRecord> out;
  for (std::size_t s = 0; s < cfg.n_speakers; ++s) {
    const std::string spk = fmt::format("spk{:02d}", s);
    for (std::size_t u = 0; u < cfg.utts_per_speaker; ++u) {
      UtteranceRecord r;
      r.id = fmt::format("{}_utt{:04d}", spk, u);
      Rng rng(derive_seed(cfg.seed, {fnv1a(r.id)}));
      StyleAttributes& a = r.attributes;
      a.speaker_id = spk;
      a.gender = s % 2 == 0 ? "male" : "female";
      a.accent = kAccents[(s / 2) % kAccents.size()];
      if (cfg.variation == ToyVariation::kPitchFamilies) {
        a.pitch = u % 2 == 0 ? "high" : "low";
        a.emotion = kEmotions[rng.index(2)];
        a.tempo = kTempos[rng.index(2)];
      } else {
        a.pitch = kPitches[rng.index(kPitches.size())];
        a.emotion = kEmotions[rng.index(kEmotions.size())];
        a.tempo = kTempos[rng.index(kTempos.size())];
      }
      const double len = rng.uniform(cfg.min_duration_s, cfg.max_duration_s);
      r.duration_s = std::round(len * dsp::kSampleRate) / dsp::kSampleRate;
      r.path = "wav/" + r.id + ".wav";
      out.push_back(std::move(r));
    }
  }
  return out;
}

dsp::Waveform render_toy_utterance(const UtteranceRecord& record, std::uint64_t corpus_seed) {
  const StyleAttributes& a = record.attributes;
  const double fs = dsp::kSampleRate;

  // Speaker template: per-harmonic gains, then gender tilt and accent bump.
  Rng spk(derive_seed(corpus_seed, {fnv1a("speaker:" + a.speaker_id)}));
  const EmotionCode emo = emotion_code(a.emotion);
  const double tilt = (a.gender == "male" ? 1.1 : 0.7) + emo.tilt_shift;
  const double bump_center = 2.0 + static_cast<double>(accent_index(a.accent));
  std::array<double, kHarmonics> gain{};
  for (int h = 1; h <= kHarmonics; ++h) {
    const double bump = 1.0 + 1.5 * std::exp(-0.5 * (h - bump_center) * (h - bump_center));
    gain[h - 1] = spk.uniform(0.4, 1.0) * std::pow(static_cast<double>(h), -tilt) * bump;
  }

  Rng rng(derive_seed(corpus_seed, {fnv1a("utterance:" + record.id)}));
  const double f0 = f0_band(a.pitch, rng);
  const double rate = syllable_rate(a.tempo) * rng.uniform(0.9, 1.1);
  const double intonation_hz = rng.uniform(0.3, 0.7), intonation_phase = rng.uniform(0.0, 2.0 * M_PI);
  const double syl_phase = rng.uniform(0.0, 2.0 * M_PI), vib_phase = rng.uniform(0.0, 2.0 * M_PI);
  std::array<double, kHarmonics> phase{};
  for (double& p : phase) p = rng.uniform(0.0, 2.0 * M_PI);

  dsp::Waveform w;
  w.samples.resize(record.samples());
  double base_phase = 0.0;
  for (std::size_t n = 0; n < w.samples.size(); ++n) {
    const double t = static_cast<double>(n) / fs;
    const double f = f0 * (1.0 + 0.04 * std::sin(2.0 * M_PI * intonation_hz * t + intonation_phase) +
                           emo.vibrato_depth * std::sin(2.0 * M_PI * emo.vibrato_hz * t + vib_phase));
    base_phase += 2.0 * M_PI * f / fs;
    double v = 0.0;
    for (int h = 1; h <= kHarmonics; ++h) {
      if (h * f >= 0.45 * fs) break;
      v += gain[h - 1] * std::sin(h * base_phase + phase[h - 1]);
    }
    const double syl = 0.5 - 0.5 * std::cos(2.0 * M_PI * rate * t + syl_phase);
    const double trem = 1.0 - emo.tremolo * (0.5 - 0.5 * std::cos(2.0 * M_PI * 2.0 * rate * t));
    w.samples[n] = v * std::pow(syl, 1.5) * trem + 0.003 * rng.normal();
  }
  const double peak = w.peak();
  if (peak > 0.0)
    for (double& s : w.samples) s *= 0.5 / peak;
  return w;
}

std::vector<UtteranceRecord> synth_toy_corpus(const ToyCorpusConfig& cfg, const std::filesystem::path& out_dir) {
  auto records = plan_toy_corpus(cfg);
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "wav", ec);
  if (ec) throw DataError("cannot create " + (out_dir / "wav").string() + ": " + ec.message());
  for (auto& r : records) {
    r.path = std::filesystem::absolute(out_dir / r.path);
    dsp::write_wav(r.path, render_toy_utterance(r, cfg.seed));
  }
  write_manifest(out_dir / "manifest.jsonl", records);
  spdlog::info("synthetic corpus: {} utterances in {}", records.size(), out_dir.string());
  return records;
}

}  // namespace cluesep::data
