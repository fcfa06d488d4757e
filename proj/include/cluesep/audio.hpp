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

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace cluesep::dsp {

inline constexpr int kSampleRate = 8000;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  std::size_t size() const { return samples.size(); }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
  double peak() const;
};

// RIFF/WAVE PCM16 mono at 8 kHz; anything else is a FormatError naming the
// offending field. Samples are scaled by 1/32768.
Waveform read_wav(const std::filesystem::path& path);
// Samples are clamped to [-1, 1) before quantization.
void write_wav(const std::filesystem::path& path, const Waveform& w);

// Integrated loudness in LUFS.
struct LoudnessLUFS {
  double value = 0.0;
};

struct Biquad {
  double b0, b1, b2, a1, a2;  // a0 normalized to 1
};

// K-weighting stages (high shelf, then high-pass) for a sample rate,
// re-derived from the analog prototypes with the bilinear transform.
std::pair<Biquad, Biquad> k_weighting(int sample_rate);

// Integrated loudness: K-weighting, 400 ms blocks with 75% overlap,
// absolute gate at -70 LKFS, then relative gate 10 LU below the
// absolute-gated loudness. InputError below 400 ms; NoGatedBlocks when
// nothing survives gating.
LoudnessLUFS measure_lufs(const Waveform& w);

struct Rescaled {
  Waveform waveform;
  double gain = 1.0;
  LoudnessLUFS measured;
};

// One gain factor so that the loudness moves from its measured value to target.
Rescaled rescale_to_lufs(const Waveform& w, LoudnessLUFS target);
// Same, for callers that already hold the measured loudness.
Rescaled rescale_from(const Waveform& w, LoudnessLUFS measured, LoudnessLUFS target);

struct Mixed {
  Waveform mixture;
  Waveform target;        // aligned to the mixture, same length
  Waveform interference;  // shifted by onset, same length
  double clipping_gain = 1.0;  // < 1 when the joint clipping guard fired
  bool clipped = false;
};

// Sum with the interference shifted by `onset` samples. Output length is
// max(len(target), onset + len(interference)). When the mixture peak exceeds
// 1.0 the mixture and both aligned references are scaled by the same factor.
Mixed mix_at_onset(const Waveform& target, const Waveform& interference, std::size_t onset);

// Loudness-based SNR (target minus interference), in dB.
inline double snr_lu(LoudnessLUFS target, LoudnessLUFS interference) { return target.value - interference.value; }

// 10*log10(energy ratio); logged next to snr_lu for comparison.
double energy_snr_db(std::span<const double> target, std::span<const double> interference);

}  // namespace cluesep::dsp
