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
#include <functional>
#include <string>
#include <vector>

#include "cluesep/autograd.hpp"

namespace cluesep::num {

struct GradCheckOptions {
  double step = 1e-5;
  // Coordinates probed per input; 0 probes every coordinate. When sampling,
  // coordinates are picked with a fixed stride so runs are reproducible.
  std::size_t max_probes = 0;
  // Relative error uses max(|analytic|, |numeric|, floor) in the denominator.
  double floor = 1e-8;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_input;
  std::size_t worst_index = 0;
  std::size_t probes = 0;
};

// Compares reverse-mode gradients of a scalar-valued computation against
// central differences (f(x+h) - f(x-h)) / 2h. `inputs` are the leaves to
// probe; `fn` must rebuild the graph from their current values on each call.
// Non-finite values raise NumericError.
GradCheckResult grad_check(const std::function<Var()>& fn, std::vector<Parameter> inputs,
                           const GradCheckOptions& options = {});

}  // namespace cluesep::num
