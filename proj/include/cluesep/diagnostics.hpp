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
#include <string>
#include <vector>

namespace cluesep::diag {

struct GradCheckEntry {
  std::string name;
  double error = 0.0;      // max relative error (absolute gradient for shift-only entries)
  double tolerance = 0.0;
  std::size_t probes = 0;
  std::string worst;       // input holding the worst coordinate
  bool ok() const { return error < tolerance; }
};

// Finite-difference checks on every differentiable op and on the full
// extract -> SI-SDR loss composition at a toy size. Linear ops use 1e-5,
// everything else 1e-4.
std::vector<GradCheckEntry> gradcheck_suite(std::uint64_t seed = 0);

}  // namespace cluesep::diag
