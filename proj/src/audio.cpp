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

#include "cluesep/audio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "cluesep/error.hpp"

namespace cluesep::dsp {

double Waveform::peak() const {
  double p = 0.0;
  for (double s : samples) p = std::max(p, std::abs(s));
  return p;
}

namespace {

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}
std::uint16_t le16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | p[1] << 8); }

void put32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = path.string() + ": ";
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError(where + "not a RIFF/WAVE file (container)");
  }
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size() && std::memcmp(chunk, "data", 4) != 0) {
      throw FormatError(where + "truncated chunk");
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw FormatError(where + "fmt chunk too short");
      const unsigned char* f = bytes.data() + body;
      const std::uint16_t format = le16(f), channels = le16(f + 2), bits = le16(f + 14);
      const std::uint32_t rate = le32(f + 4);
      if (format != 1) throw FormatError(where + "audio_format " + std::to_string(format) + " is not PCM (1)");
      if (channels != 1) throw FormatError(where + "channels " + std::to_string(channels) + " != 1");
      if (rate != static_cast<std::uint32_t>(kSampleRate)) {
        throw FormatError(where + "sample_rate " + std::to_string(rate) + " != " + std::to_string(kSampleRate));
      }
      if (bits != 16) throw FormatError(where + "bits_per_sample " + std::to_string(bits) + " != 16");
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw FormatError(where + "data chunk before fmt chunk");
      const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
      Waveform w;
      w.samples.resize(avail / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        const auto s = static_cast<std::int16_t>(le16(bytes.data() + body + 2 * i));
        w.samples[i] = static_cast<double>(s) / 32768.0;
      }
      return w;
    }
    pos = body + size + (size & 1);
  }
  throw FormatError(where + (have_fmt ? "missing data chunk" : "missing fmt chunk"));
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  if (w.sample_rate != kSampleRate) {
    throw FormatError("write_wav: sample_rate " + std::to_string(w.sample_rate) + " != " +
                      std::to_string(kSampleRate));
  }
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  std::string out;
  out.reserve(44 + 2 * n);
  out += "RIFF";
  put32(out, 36 + 2 * n);
  out += "WAVEfmt ";
  put32(out, 16);
  put16(out, 1);
  put16(out, 1);
  put32(out, kSampleRate);
  put32(out, kSampleRate * 2);
  put16(out, 2);
  put16(out, 16);
  out += "data";
  put32(out, 2 * n);
  for (double s : w.samples) {
    const double q = std::round(std::clamp(s, -1.0, 1.0) * 32768.0);
    put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::clamp(q, -32768.0, 32767.0))));
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("short write to " + path.string());
}

std::pair<Biquad, Biquad> k_weighting(int sample_rate) {
  const double fs = sample_rate;
  // High shelf (+4 dB above ~1.7 kHz).
  const double fc = 1681.9744509555319, gain_db = 3.99984385397, q = 0.7071752369554193;
  const double vh = std::pow(10.0, gain_db / 20.0);
  const double vb = std::pow(vh, 0.4996667741545416);
  double k = std::tan(M_PI * fc / fs);
  double a0 = 1.0 + k / q + k * k;
  const Biquad shelf{(vh + vb * k / q + k * k) / a0, 2.0 * (k * k - vh) / a0, (vh - vb * k / q + k * k) / a0,
                     2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0};
  // Second-order high-pass at ~38 Hz.
  const double hp_fc = 38.13547087602444, hp_q = 0.5003270373238773;
  k = std::tan(M_PI * hp_fc / fs);
  a0 = 1.0 + k / hp_q + k * k;
  const Biquad highpass{1.0, -2.0, 1.0, 2.0 * (k * k - 1.0) / a0, (1.0 - k / hp_q + k * k) / a0};
  return {shelf, highpass};
}

namespace {

void filter_inplace(const Biquad& f, std::vector<double>& x) {
  double z1 = 0.0, z2 = 0.0;  // transposed direct form II
  for (double& v : x) {
    const double in = v;
    const double out = f.b0 * in + z1;
    z1 = f.b1 * in - f.a1 * out + z2;
    z2 = f.b2 * in - f.a2 * out;
    v = out;
  }
}

}  // namespace

LoudnessLUFS measure_lufs(const Waveform& w) {
  const std::size_t block = static_cast<std::size_t>(0.4 * w.sample_rate);
  const std::size_t hop = block / 4;
  if (w.samples.size() < block) {
    throw InputError("loudness needs at least 400 ms of audio, got " + std::to_string(w.samples.size()) +
                     " samples");
  }
  std::vector<double> y = w.samples;
  const auto [shelf, hp] = k_weighting(w.sample_rate);
  filter_inplace(shelf, y);
  filter_inplace(hp, y);

  // prefix sums of squares for the block means
  std::vector<double> cum(y.size() + 1, 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) cum[i + 1] = cum[i] + y[i] * y[i];
  const std::size_t blocks = (y.size() - block) / hop + 1;
  std::vector<double> power;
  power.reserve(blocks);
  auto loudness = [](double z) { return -0.691 + 10.0 * std::log10(z); };
  for (std::size_t j = 0; j < blocks; ++j) {
    const double z = (cum[j * hop + block] - cum[j * hop]) / static_cast<double>(block);
    if (z > 0.0 && loudness(z) > -70.0) power.push_back(z);
  }
  if (power.empty()) throw NoGatedBlocks();
  double mean_abs = 0.0;
  for (double z : power) mean_abs += z;
  mean_abs /= static_cast<double>(power.size());
  const double relative_gate = loudness(mean_abs) - 10.0;
  double total = 0.0;
  std::size_t kept = 0;
  for (double z : power) {
    if (loudness(z) > relative_gate) {
      total += z;
      ++kept;
    }
  }
  if (kept == 0) throw NoGatedBlocks();
  return {loudness(total / static_cast<double>(kept))};
}

Rescaled rescale_from(const Waveform& w, LoudnessLUFS measured, LoudnessLUFS target) {
  Rescaled r;
  r.measured = measured;
  r.gain = std::pow(10.0, (target.value - measured.value) / 20.0);
  r.waveform = w;
  for (double& s : r.waveform.samples) s *= r.gain;
  return r;
}

Rescaled rescale_to_lufs(const Waveform& w, LoudnessLUFS target) { return rescale_from(w, measure_lufs(w), target); }

Mixed mix_at_onset(const Waveform& target, const Waveform& interference, std::size_t onset) {
  const std::size_t len = std::max(target.size(), onset + interference.size());
  Mixed m;
  m.target.samples.assign(len, 0.0);
  m.interference.samples.assign(len, 0.0);
  std::copy(target.samples.begin(), target.samples.end(), m.target.samples.begin());
  std::copy(interference.samples.begin(), interference.samples.end(), m.interference.samples.begin() + onset);
  m.mixture.samples.resize(len);
  for (std::size_t i = 0; i < len; ++i) m.mixture.samples[i] = m.target.samples[i] + m.interference.samples[i];
  const double peak = m.mixture.peak();
  if (peak > 1.0) {
    m.clipped = true;
    m.clipping_gain = 1.0 / peak;
    for (auto* sig : {&m.mixture, &m.target, &m.interference})
      for (double& s : sig->samples) s *= m.clipping_gain;
  }
  return m;
}

double energy_snr_db(std::span<const double> target, std::span<const double> interference) {
  double et = 0.0, ei = 0.0;
  for (double s : target) et += s * s;
  for (double s : interference) ei += s * s;
  return 10.0 * std::log10(et / ei);
}

}  // namespace cluesep::dsp
