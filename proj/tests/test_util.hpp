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
#include <string>
#include <vector>

#include "cluesep/autograd.hpp"
#include "cluesep/ops.hpp"
#include "cluesep/rng.hpp"

namespace cluesep::testing {

inline num::Tensor random_tensor(num::Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  num::Tensor t(std::move(shape));
  Rng rng(seed);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

inline num::Parameter param(const std::string& name, num::Shape shape, std::vector<double> values) {
  return num::Parameter(name, num::Tensor(std::move(shape), std::move(values)));
}

inline num::Parameter random_param(const std::string& name, num::Shape shape, std::uint64_t seed) {
  return num::Parameter(name, random_tensor(std::move(shape), seed));
}

// Weighted sum with fixed pseudo-random weights, so every output coordinate
// contributes a distinct amount to the checked scalar.
inline num::Var probe_sum(const num::Var& x, std::uint64_t seed = 99) {
  num::Tensor w = random_tensor(x.shape(), seed, 0.5, 1.5);
  return num::sum(num::mul(x, num::constant(std::move(w))));
}

}  // namespace cluesep::testing
