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

#include <cmath>
#include <vector>

#include "cluesep/audio.hpp"

namespace cluesep::testing {

// Independent BS.1770 route: generic bilinear transform of the normalized
// analog prototypes, direct-form I filtering and per-block summation.
struct Poly2 {
  double n2, n1, n0, d2, d1, d0;
};

// BS.1770 tabulates the high-pass numerator as exactly [1, -2, 1]; only its
// poles follow the sample rate, so that stage skips numerator normalization.
inline std::vector<double> bilinear_filter(const Poly2& proto, double fc, const std::vector<double>& x,
                                    bool normalize_numerator = true) {
  const double k = std::tan(M_PI * fc / dsp::kSampleRate);
  const double b[3] = {proto.n2 + proto.n1 * k + proto.n0 * k * k, -2.0 * proto.n2 + 2.0 * proto.n0 * k * k,
                       proto.n2 - proto.n1 * k + proto.n0 * k * k};
  const double a[3] = {proto.d2 + proto.d1 * k + proto.d0 * k * k, -2.0 * proto.d2 + 2.0 * proto.d0 * k * k,
                       proto.d2 - proto.d1 * k + proto.d0 * k * k};
  const double num_scale = normalize_numerator ? 1.0 : a[0];
  std::vector<double> y(x.size());
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = (num_scale * (b[0] * x[i] + b[1] * x1 + b[2] * x2) - a[1] * y1 - a[2] * y2) / a[0];
    x2 = x1;
    x1 = x[i];
    y2 = y1;
    y1 = y[i];
  }
  return y;
}

inline double oracle_lufs(const std::vector<double>& x) {
  const double vh = std::pow(10.0, 3.99984385397 / 20.0), vb = std::pow(vh, 0.4996667741545416);
  const double q = 0.7071752369554193, hq = 0.5003270373238773;
  auto y = bilinear_filter({vh, vb / q, 1.0, 1.0, 1.0 / q, 1.0}, 1681.9744509555319, x);
  y = bilinear_filter({1.0, 0.0, 0.0, 1.0, 1.0 / hq, 1.0}, 38.13547087602444, y, false);
  const std::size_t block = 3200, hop = 800;
  std::vector<double> z;
  for (std::size_t start = 0; start + block <= y.size(); start += hop) {
    double s = 0.0;
    for (std::size_t i = start; i < start + block; ++i) s += y[i] * y[i];
    z.push_back(s / block);
  }
  auto lk = [](double p) { return -0.691 + 10.0 * std::log10(p); };
  std::vector<double> gated;
  for (double p : z)
    if (p > 0 && lk(p) > -70.0) gated.push_back(p);
  double m = 0.0;
  for (double p : gated) m += p / gated.size();
  const double rel = lk(m) - 10.0;
  double total = 0.0;
  int kept = 0;
  for (double p : gated)
    if (lk(p) > rel) {
      total += p;
      ++kept;
    }
  return lk(total / kept);
}


}  // namespace cluesep::testing
