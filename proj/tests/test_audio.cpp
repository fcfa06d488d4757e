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

#include <catch_amalgamated.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "cluesep/audio.hpp"
#include "cluesep/error.hpp"
#include "cluesep/rng.hpp"
#include "bs1770_oracle.hpp"

using namespace cluesep;
using namespace cluesep::dsp;
using Catch::Approx;
using cluesep::testing::oracle_lufs;

namespace {

std::filesystem::path tmp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "cluesep_test_audio";
  std::filesystem::create_directories(dir);
  return dir / name;
}

Waveform sine(double freq, double amp, double seconds) {
  Waveform w;
  const auto n = static_cast<std::size_t>(seconds * kSampleRate);
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) w.samples[i] = amp * std::sin(2.0 * M_PI * freq * i / kSampleRate);
  return w;
}

// Speech-like test signal: noise bursts with silent gaps.
Waveform bursts(std::uint64_t seed, double seconds) {
  Rng rng(seed);
  Waveform w;
  const auto n = static_cast<std::size_t>(seconds * kSampleRate);
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double env = std::sin(M_PI * 3.0 * i / kSampleRate) > 0.2 ? 1.0 : 0.02;
    w.samples[i] = 0.3 * env * rng.normal();
  }
  return w;
}

void write_raw_wav(const std::filesystem::path& p, int channels, int rate, int bits, int format = 1) {
  std::ofstream f(p, std::ios::binary);
  auto u32 = [&](std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
  auto u16 = [&](std::uint16_t v) { f.write(reinterpret_cast<const char*>(&v), 2); };
  const std::uint32_t data = 8;
  f.write("RIFF", 4);
  u32(36 + data);
  f.write("WAVEfmt ", 8);
  u32(16);
  u16(format);
  u16(channels);
  u32(rate);
  u32(rate * channels * bits / 8);
  u16(channels * bits / 8);
  u16(bits);
  f.write("data", 4);
  u32(data);
  for (int i = 0; i < 8; ++i) f.put(0);
}

}  // namespace

TEST_CASE("WAV round trip and format errors", "[dsp][wav]") {
  const auto p = tmp_path("sine.wav");
  Waveform w = sine(440.0, 0.8, 1.0);
  write_wav(p, w);
  Waveform r = read_wav(p);
  REQUIRE(r.size() == w.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) worst = std::max(worst, std::abs(w.samples[i] - r.samples[i]));
  CHECK(worst <= 1.0 / 32768.0);

  SECTION("stereo") {
    write_raw_wav(tmp_path("stereo.wav"), 2, 8000, 16);
    CHECK_THROWS_AS(read_wav(tmp_path("stereo.wav")), FormatError);
  }
  SECTION("16 kHz names sample_rate") {
    write_raw_wav(tmp_path("wide.wav"), 1, 16000, 16);
    CHECK_THROWS_WITH(read_wav(tmp_path("wide.wav")), Catch::Matchers::ContainsSubstring("sample_rate"));
  }
  SECTION("8-bit and float") {
    write_raw_wav(tmp_path("u8.wav"), 1, 8000, 8);
    CHECK_THROWS_WITH(read_wav(tmp_path("u8.wav")), Catch::Matchers::ContainsSubstring("bits_per_sample"));
    write_raw_wav(tmp_path("float.wav"), 1, 8000, 32, 3);
    CHECK_THROWS_WITH(read_wav(tmp_path("float.wav")), Catch::Matchers::ContainsSubstring("audio_format"));
  }
  SECTION("not a wav") {
    std::ofstream(tmp_path("junk.wav")) << "hello world, not audio";
    CHECK_THROWS_AS(read_wav(tmp_path("junk.wav")), FormatError);
  }
  SECTION("write path clamps to full scale") {
    Waveform loud;
    loud.samples = {1.5, -2.0, 0.25};
    write_wav(tmp_path("loud.wav"), loud);
    Waveform back = read_wav(tmp_path("loud.wav"));
    CHECK(back.samples[0] == Approx(32767.0 / 32768.0));
    CHECK(back.samples[1] == -1.0);
    CHECK(back.samples[2] == 0.25);
  }
}

TEST_CASE("K-weighting matches the tabulated 48 kHz coefficients", "[dsp][loudness]") {
  auto [shelf, hp] = k_weighting(48000);
  CHECK(shelf.b0 == Approx(1.53512485958697).epsilon(1e-10));
  CHECK(shelf.b1 == Approx(-2.69169618940638).epsilon(1e-10));
  CHECK(shelf.b2 == Approx(1.19839281085285).epsilon(1e-10));
  CHECK(shelf.a1 == Approx(-1.69065929318241).epsilon(1e-10));
  CHECK(shelf.a2 == Approx(0.73248077421585).epsilon(1e-10));
  CHECK(hp.a1 == Approx(-1.99004745483398).epsilon(1e-10));
  CHECK(hp.a2 == Approx(0.99007225036621).epsilon(1e-10));
}

TEST_CASE("integrated loudness", "[dsp][loudness]") {
  SECTION("full-scale 997 Hz sine") {
    Waveform w = sine(997.0, 1.0, 3.0);
    const double measured = measure_lufs(w).value;
    CHECK(std::abs(measured - (-3.01)) <= 0.10);
    CHECK(measured == Approx(oracle_lufs(w.samples)).margin(1e-9));
  }
  SECTION("matches the oracle on gated, non-stationary audio") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      Waveform w = bursts(seed, 4.0);
      CHECK(measure_lufs(w).value == Approx(oracle_lufs(w.samples)).margin(1e-9));
    }
  }
  SECTION("halving the amplitude lowers loudness by 6.02 LU") {
    Waveform w = bursts(7, 3.0), half = w;
    for (double& s : half.samples) s *= 0.5;
    CHECK(std::abs(measure_lufs(w).value - measure_lufs(half).value - 6.0206) <= 0.01);
  }
  SECTION("silence has no gated blocks") {
    Waveform silent;
    silent.samples.assign(8000, 0.0);
    CHECK_THROWS_AS(measure_lufs(silent), NoGatedBlocks);
  }
  SECTION("shorter than one block") {
    Waveform w = sine(200.0, 0.5, 0.3);
    CHECK_THROWS_AS(measure_lufs(w), InputError);
  }
}

TEST_CASE("loudness is scale-covariant", "[dsp][loudness][property]") {
  Rng rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    Waveform w = bursts(100 + trial, 3.0 + rng.uniform(0.0, 2.0));
    const double g = rng.uniform(0.1, 1.0);
    Waveform scaled = w;
    for (double& s : scaled.samples) s *= g;
    CHECK(std::abs(measure_lufs(scaled).value - measure_lufs(w).value - 20.0 * std::log10(g)) <= 0.05);
  }
}

TEST_CASE("rescale_to_lufs applies one gain", "[dsp][loudness]") {
  Waveform w = sine(997.0, 1.0, 2.0);
  const double own = measure_lufs(w).value;
  CHECK(rescale_to_lufs(w, {own}).gain == Approx(1.0).margin(1e-3));

  auto r = rescale_to_lufs(w, {-25.0});
  CHECK(r.gain == Approx(std::pow(10.0, (-25.0 - own) / 20.0)).epsilon(1e-12));
  CHECK(std::abs(measure_lufs(r.waveform).value - (-25.0)) <= 0.2);

  auto quiet = rescale_to_lufs(bursts(5, 4.0), {-33.0}).waveform;
  auto up = rescale_to_lufs(quiet, {-25.0});
  CHECK(20.0 * std::log10(up.gain) == Approx(8.0).margin(0.2));

  Waveform silent;
  silent.samples.assign(8000, 0.0);
  CHECK_THROWS_AS(rescale_to_lufs(silent, {-25.0}), NoGatedBlocks);
}

TEST_CASE("mix_at_onset", "[dsp][mix]") {
  SECTION("silent interference leaves the target") {
    Waveform t = bursts(1, 1.0), z;
    for (double& v : t.samples) v *= 0.1;
    z.samples.assign(t.size(), 0.0);
    auto m = mix_at_onset(t, z, 0);
    CHECK(m.mixture.samples == t.samples);
    CHECK_FALSE(m.clipped);
  }
  SECTION("impulses land at their onsets") {
    Waveform a, b;
    a.samples = {1, 0, 0};
    b.samples = {1, 0};
    auto m = mix_at_onset(a, b, 5);
    CHECK(m.mixture.samples == std::vector<double>{1, 0, 0, 0, 0, 1, 0});
    CHECK(m.target.size() == 7);
    CHECK(m.interference.samples[5] == 1.0);
  }
  SECTION("joint clipping guard") {
    Waveform a, b;
    a.samples = {0.8, 0.1};
    b.samples = {0.8, -0.1};
    auto m = mix_at_onset(a, b, 0);
    REQUIRE(m.clipped);
    CHECK(m.clipping_gain == Approx(1.0 / 1.6));
    CHECK(m.mixture.samples[0] == Approx(1.0));
    CHECK(m.target.samples[0] == Approx(0.5));
    CHECK(m.interference.samples[0] == Approx(0.5));
  }
  SECTION("commutes when onsets are exchanged") {
    Waveform a = bursts(2, 0.5), b = bursts(3, 0.7);
    auto ab = mix_at_onset(a, b, 300);
    // same sum with b as the first source, pre-delayed by 300 samples
    Waveform b_shift;
    b_shift.samples.assign(300, 0.0);
    b_shift.samples.insert(b_shift.samples.end(), b.samples.begin(), b.samples.end());
    auto ba = mix_at_onset(b_shift, a, 0);
    CHECK(ab.mixture.samples == ba.mixture.samples);
  }
}

TEST_CASE("snr_lu", "[dsp][snr]") {
  CHECK(snr_lu({-25}, {-33}) == 8.0);
  CHECK(snr_lu({-30}, {-30}) == 0.0);
  CHECK(snr_lu({-33}, {-25}) == -8.0);

  // a common gain leaves the loudness difference unchanged
  Waveform t = rescale_to_lufs(bursts(8, 3.0), {-26.0}).waveform;
  Waveform i = rescale_to_lufs(bursts(9, 3.0), {-31.5}).waveform;
  const double before = snr_lu(measure_lufs(t), measure_lufs(i));
  auto m = mix_at_onset(t, i, 0);
  for (double& s : t.samples) s *= 0.37;
  for (double& s : i.samples) s *= 0.37;
  CHECK(snr_lu(measure_lufs(t), measure_lufs(i)) == Approx(before).margin(1e-9));
  CHECK(energy_snr_db(m.target.samples, m.interference.samples) > 0.0);
}
