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

#include "cluesep/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "cluesep/error.hpp"

namespace cluesep::num {

namespace {

double scalar_of(const Var& v) {
  if (v.size() != 1) throw DimensionError("grad_check: computation must be scalar-valued");
  const double x = v.value()[0];
  if (!std::isfinite(x)) throw NumericError("grad_check: non-finite objective");
  return x;
}

}  // namespace

GradCheckResult grad_check(const std::function<Var()>& fn, std::vector<Parameter> inputs,
                           const GradCheckOptions& options) {
  for (auto& p : inputs) p.zero_grad();
  Var root = fn();
  scalar_of(root);
  root.backward();
  std::vector<Tensor> analytic;
  analytic.reserve(inputs.size());
  for (auto& p : inputs) analytic.push_back(p.grad());

  GradCheckResult result;
  for (std::size_t pi = 0; pi < inputs.size(); ++pi) {
    auto& p = inputs[pi];
    auto& values = p.mutable_value();
    const std::size_t n = values.size();
    const std::size_t probes = options.max_probes == 0 ? n : std::min(n, options.max_probes);
    const std::size_t stride = std::max<std::size_t>(1, n / probes);
    for (std::size_t j = 0, idx = (pi * 7) % stride; j < probes && idx < n; ++j, idx += stride) {
      const double saved = values[idx];
      values[idx] = saved + options.step;
      const double up = scalar_of(fn());
      values[idx] = saved - options.step;
      const double down = scalar_of(fn());
      values[idx] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double exact = analytic[pi][idx];
      if (!std::isfinite(exact)) throw NumericError("grad_check: non-finite gradient for " + p.name());
      const double denom = std::max({std::abs(exact), std::abs(numeric), options.floor});
      const double rel = std::abs(exact - numeric) / denom;
      ++result.probes;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_input = p.name();
        result.worst_index = idx;
      }
    }
  }
  for (auto& p : inputs) p.zero_grad();
  return result;
}

}  // namespace cluesep::num
