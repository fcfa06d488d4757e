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
#include <limits>

#include "cluesep/error.hpp"
#include "cluesep/grad_check.hpp"
#include "cluesep/ops.hpp"
#include "test_util.hpp"

using namespace cluesep;
using namespace cluesep::num;
using cluesep::testing::param;
using cluesep::testing::probe_sum;
using cluesep::testing::random_param;
using cluesep::testing::random_tensor;
using Catch::Approx;

namespace {

std::vector<double> vals(const Var& v) { return {v.value().values().begin(), v.value().values().end()}; }

}  // namespace

TEST_CASE("conv1d matches the sliding-window definition", "[numerics][conv]") {
  Var x = constant(Tensor({1, 4}, {1, 2, 3, 4}));

  SECTION("identity kernel") {
    auto k = param("k", {1, 1, 1}, {1});
    CHECK(vals(conv1d(x, k.var(), 1)) == std::vector<double>{1, 2, 3, 4});
  }
  SECTION("pairwise sum with stride 2") {
    auto k = param("k", {1, 1, 2}, {1, 1});
    Var y = conv1d(x, k.var(), 2);
    CHECK(y.shape() == Shape{1, 2});
    CHECK(vals(y) == std::vector<double>{3, 7});
  }
  SECTION("kernel longer than input") {
    Var short_x = constant(Tensor({1, 3}, {1, 2, 3}));
    auto k = param("k", {1, 1, 4}, {1, 1, 1, 1});
    CHECK_THROWS_AS(conv1d(short_x, k.var(), 1), DimensionError);
  }
  SECTION("channel mismatch") {
    auto k = param("k", {2, 3, 2}, std::vector<double>(12, 1.0));
    CHECK_THROWS_AS(conv1d(x, k.var(), 1), DimensionError);
  }
  SECTION("output length law") {
    for (std::size_t len : {16u, 17u, 23u, 40u}) {
      Var xi = constant(random_tensor({2, len}, len));
      auto k = random_param("k", {3, 2, 5}, 1);
      CHECK(conv1d(xi, k.var(), 3).shape() == Shape{3, (len - 5) / 3 + 1});
    }
  }
}

TEST_CASE("conv_transpose1d scatters frames back", "[numerics][conv]") {
  SECTION("inverts identity conv1d") {
    auto k = param("k", {1, 1, 1}, {1});
    Var x = constant(Tensor({1, 5}, {0.5, -1, 2, 3, -4}));
    Var y = conv_transpose1d(conv1d(x, k.var(), 1), k.var(), 1);
    CHECK(vals(y) == vals(x));
  }
  SECTION("scatter-add oracle") {
    auto k = param("k", {1, 1, 2}, {1, 1});
    Var y = conv_transpose1d(constant(Tensor({1, 2}, {3, 7})), k.var(), 2);
    CHECK(vals(y) == std::vector<double>{3, 3, 7, 7});
  }
  SECTION("overlapping frames accumulate and output length is fitted") {
    auto k = param("k", {1, 1, 3}, {1, 2, 3});
    Var x = constant(Tensor({1, 2}, {1, 10}));
    // frame 0 -> [1,2,3] at 0; frame 1 -> [10,20,30] at 2
    CHECK(vals(conv_transpose1d(x, k.var(), 2)) == std::vector<double>{1, 2, 13, 20, 30});
    CHECK(vals(conv_transpose1d(x, k.var(), 2, 7)) == std::vector<double>{1, 2, 13, 20, 30, 0, 0});
    CHECK(vals(conv_transpose1d(x, k.var(), 2, 4)) == std::vector<double>{1, 2, 13, 20});
  }
  SECTION("mirroring contract") {
    CHECK_NOTHROW(check_mirrored({16, 8}, {16, 8}));
    CHECK_THROWS_AS(check_mirrored({16, 8}, {16, 4}), ConfigError);
    CHECK_THROWS_AS(check_mirrored({16, 8}, {8, 8}), ConfigError);
  }
  SECTION("gradient matches central differences") {
    auto x = random_param("x", {3, 6}, 11);
    auto k = random_param("k", {3, 2, 4}, 12);
    auto r = grad_check([&] { return probe_sum(conv_transpose1d(x.var(), k.var(), 2, 15)); }, {x, k});
    CHECK(r.max_rel_error < 1e-5);
  }
}

TEST_CASE("conv1d gradient matches central differences", "[numerics][conv][grad]") {
  auto x = random_param("x", {2, 20}, 3);
  auto k = random_param("k", {4, 2, 5}, 4);
  auto r = grad_check([&] { return probe_sum(conv1d(x.var(), k.var(), 3)); }, {x, k});
  CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("affine", "[numerics][affine]") {
  SECTION("identity weight and zero bias") {
    auto w = param("w", {3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    auto b = param("b", {3}, {0, 0, 0});
    Var x = constant(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
    CHECK(vals(affine(x, w.var(), b.var())) == vals(x));
  }
  SECTION("scalar case") {
    auto w = param("w", {1, 1}, {2});
    auto b = param("b", {1}, {1});
    CHECK(vals(affine(constant(Tensor({1}, {3})), w.var(), b.var())) == std::vector<double>{7});
  }
  SECTION("random 4x3 against a triple-loop matmul") {
    Tensor wt = random_tensor({4, 3}, 21), bt = random_tensor({4}, 22), xt = random_tensor({5, 3}, 23);
    Var y = affine(constant(xt), constant(wt), constant(bt));
    for (std::size_t r = 0; r < 5; ++r)
      for (std::size_t o = 0; o < 4; ++o) {
        double acc = bt[o];
        for (std::size_t i = 0; i < 3; ++i) acc += wt.at(o, i) * xt.at(r, i);
        CHECK(y.value().at(r, o) == Approx(acc).epsilon(1e-14));
      }
  }
  SECTION("broadcast over leading axes") {
    Tensor xt = random_tensor({2, 3, 4}, 5);
    auto w = random_param("w", {6, 4}, 6);
    Var y = affine(constant(xt), w.var());
    CHECK(y.shape() == Shape{2, 3, 6});
  }
  SECTION("dimension mismatch") {
    auto w = param("w", {2, 2}, {1, 0, 0, 1});
    CHECK_THROWS_AS(affine(constant(Tensor({3}, {1, 2, 3})), w.var()), DimensionError);
  }
  SECTION("grad_check on a random 3x3 affine map") {
    auto w = random_param("w", {3, 3}, 31);
    auto b = random_param("b", {3}, 32);
    auto x = random_param("x", {4, 3}, 33);
    auto r = grad_check([&] { return probe_sum(affine(x.var(), w.var(), b.var())); }, {w, b, x});
    CHECK(r.max_rel_error < 1e-6);
  }
}

TEST_CASE("elementwise nonlinearities", "[numerics][elementwise]") {
  CHECK(vals(relu(constant(Tensor::vector({-1, 0, 2})))) == std::vector<double>{0, 0, 2});
  CHECK(vals(softmax(constant(Tensor::vector({0, 0})), 0)) == std::vector<double>{0.5, 0.5});
  CHECK(sigmoid(constant(Tensor::vector({0}))).value()[0] == 0.5);
  CHECK(sigmoid(constant(Tensor::vector({-800}))).value()[0] == Approx(0.0).margin(1e-300));
  CHECK_THROWS_AS(elementwise(Elementwise::kSoftmax, constant(Tensor::vector({1}))), ConfigError);
  CHECK(vals(elementwise(Elementwise::kRelu, constant(Tensor::vector({-3, 3})))) == std::vector<double>{0, 3});

  SECTION("softmax is stable for large logits") {
    Var y = softmax(constant(Tensor::vector({1000, 1000, 1000, 1000})), 0);
    for (double v : vals(y)) CHECK(v == Approx(0.25));
  }
}

TEST_CASE("softmax outputs are a distribution along any axis", "[numerics][property]") {
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    Rng rng(trial);
    const Shape shape{1 + rng.index(4), 1 + rng.index(5), 1 + rng.index(6)};
    const std::size_t axis = rng.index(3);
    Var y = softmax(constant(random_tensor(shape, trial + 100, -30, 30)), axis);
    const auto& v = y.value();
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
    for (std::size_t i = axis + 1; i < 3; ++i) inner *= shape[i];
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t j = 0; j < inner; ++j) {
        double total = 0.0;
        for (std::size_t i = 0; i < shape[axis]; ++i) {
          const double p = v[(o * shape[axis] + i) * inner + j];
          CHECK(p >= 0.0);
          total += p;
        }
        CHECK(std::abs(total - 1.0) < 1e-9);
      }
  }
}

TEST_CASE("layer_norm normalizes each slice", "[numerics][property]") {
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    Rng rng(trial + 7);
    const Shape shape{2 + rng.index(4), 3 + rng.index(30)};
    const std::size_t axis = rng.index(2);
    Tensor x = random_tensor(shape, trial + 200, -5, 5);
    Var y = layer_norm(constant(x), axis);
    const std::size_t n = shape[axis], other = shape[1 - axis];
    for (std::size_t s = 0; s < other; ++s) {
      double mu = 0.0, var = 0.0, in_mu = 0.0, in_var = 0.0;
      auto at = [&](const Tensor& t, std::size_t i) { return axis == 0 ? t.at(i, s) : t.at(s, i); };
      for (std::size_t i = 0; i < n; ++i) in_mu += at(x, i) / n;
      for (std::size_t i = 0; i < n; ++i) in_var += (at(x, i) - in_mu) * (at(x, i) - in_mu) / n;
      for (std::size_t i = 0; i < n; ++i) mu += at(y.value(), i) / n;
      for (std::size_t i = 0; i < n; ++i) var += (at(y.value(), i) - mu) * (at(y.value(), i) - mu) / n;
      if (in_var <= 1e-3) continue;
      CHECK(std::abs(mu) < 1e-6);
      // eps = 1e-5 shrinks the variance by in_var / (in_var + eps)
      CHECK(std::abs(var - 1.0) < 1e-4 + 1e-5 / in_var);
    }
  }
}

TEST_CASE("differentiable ops pass grad_check", "[numerics][grad]") {
  SECTION("relu probed away from zero") {
    Tensor xt = random_tensor({3, 5}, 41);
    for (auto& v : xt.values())
      if (std::abs(v) < 1e-2) v = 0.5;
    Parameter x("x", xt);
    auto r = grad_check([&] { return probe_sum(relu(x.var())); }, {x});
    CHECK(r.max_rel_error < 1e-6);
  }
  SECTION("sigmoid") {
    auto x = random_param("x", {3, 4}, 42);
    CHECK(grad_check([&] { return probe_sum(sigmoid(x.var())); }, {x}).max_rel_error < 1e-4);
  }
  SECTION("softmax along each axis") {
    auto x = random_param("x", {3, 4, 2}, 43);
    for (std::size_t axis = 0; axis < 3; ++axis)
      CHECK(grad_check([&] { return probe_sum(softmax(x.var(), axis)); }, {x}).max_rel_error < 1e-4);
  }
  SECTION("layer_norm along each axis") {
    auto x = random_param("x", {4, 6}, 44);
    for (std::size_t axis = 0; axis < 2; ++axis)
      CHECK(grad_check([&] { return probe_sum(layer_norm(x.var(), axis)); }, {x}).max_rel_error < 1e-4);
  }
  SECTION("bmm in every transpose combination") {
    auto a = random_param("a", {2, 3, 4}, 45);
    auto b = random_param("b", {2, 4, 5}, 46);
    auto at = random_param("at", {2, 4, 3}, 47);
    auto bt = random_param("bt", {2, 5, 4}, 48);
    CHECK(grad_check([&] { return probe_sum(bmm(a.var(), b.var(), false, false, 0.7)); }, {a, b}).max_rel_error < 1e-5);
    CHECK(grad_check([&] { return probe_sum(bmm(a.var(), bt.var(), false, true)); }, {a, bt}).max_rel_error < 1e-5);
    CHECK(grad_check([&] { return probe_sum(bmm(at.var(), b.var(), true, false)); }, {at, b}).max_rel_error < 1e-5);
    CHECK(grad_check([&] { return probe_sum(bmm(at.var(), bt.var(), true, true)); }, {at, bt}).max_rel_error < 1e-5);
  }
  SECTION("structural ops") {
    auto x = random_param("x", {2, 3, 4}, 49);
    auto v = random_param("v", {4}, 50);
    auto y = random_param("y", {2, 3, 2}, 51);
    CHECK(grad_check([&] { return probe_sum(permute(x.var(), {2, 0, 1})); }, {x}).max_rel_error < 1e-6);
    CHECK(grad_check([&] { return probe_sum(add_bias(x.var(), v.var())); }, {x, v}).max_rel_error < 1e-6);
    CHECK(grad_check([&] { return probe_sum(mul_bias(x.var(), v.var())); }, {x, v}).max_rel_error < 1e-6);
    CHECK(grad_check([&] { return probe_sum(concat(x.var(), y.var())); }, {x, y}).max_rel_error < 1e-6);
    CHECK(grad_check([&] { return probe_sum(fit_length(x.var(), 6)); }, {x}).max_rel_error < 1e-6);
    CHECK(grad_check([&] { return probe_sum(fit_length(x.var(), 2)); }, {x}).max_rel_error < 1e-6);
    CHECK(grad_check([&] { return mean(mul(x.var(), sub(x.var(), scale(x.var(), 0.3)))); }, {x}).max_rel_error <
          1e-5);
  }
}

TEST_CASE("permute agrees with explicit index arithmetic", "[numerics][permute]") {
  Tensor xt = random_tensor({2, 3, 4, 5}, 60);
  Var y = permute(constant(xt), {3, 1, 0, 2});
  REQUIRE(y.shape() == Shape{5, 3, 2, 4});
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t d = 0; d < 5; ++d)
          CHECK(y.value()[((d * 3 + b) * 2 + a) * 4 + c] == xt[((a * 3 + b) * 4 + c) * 5 + d]);
  CHECK_THROWS_AS(permute(constant(xt), {0, 0, 1, 2}), DimensionError);
}

TEST_CASE("multi-head attention", "[numerics][attention]") {
  ParameterSet set;
  const std::size_t d = 4;
  auto params = make_attention_params(set, "mha", d, 5);

  SECTION("a single position attends to itself with weight one") {
    Tensor qt = random_tensor({1, d}, 70), vt = random_tensor({1, d}, 71);
    Var out = multi_head_attention(constant(qt), constant(qt), constant(vt), 2, params);
    Var expected = affine(affine(constant(vt), params.wv.var(), params.bv.var()), params.wo.var(), params.bo.var());
    for (std::size_t i = 0; i < d; ++i) CHECK(out.value()[i] == Approx(expected.value()[i]).epsilon(1e-12));
  }

  SECTION("identity projections reduce to softmax-weighted rows of v") {
    for (auto& p : set.items()) {
      auto& v = p.mutable_value();
      v.fill(0.0);
      if (v.rank() == 2)
        for (std::size_t i = 0; i < d; ++i) v.at(i, i) = 1.0;
    }
    // one-hot rows for q = k
    Tensor qk({3, d}, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0});
    Tensor vt = random_tensor({3, d}, 72);
    Var out = multi_head_attention(constant(qk), constant(qk), constant(vt), 1, params);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t t = 0; t < 3; ++t) {
      double w[3], total = 0.0;
      for (std::size_t s = 0; s < 3; ++s) {
        double dot = 0.0;
        for (std::size_t i = 0; i < d; ++i) dot += qk.at(t, i) * qk.at(s, i);
        w[s] = std::exp(dot * scale);
        total += w[s];
      }
      for (std::size_t i = 0; i < d; ++i) {
        double expect = 0.0;
        for (std::size_t s = 0; s < 3; ++s) expect += w[s] / total * vt.at(s, i);
        CHECK(out.value().at(t, i) == Approx(expect).epsilon(1e-12));
      }
    }
  }

  SECTION("heads must divide the model dimension") {
    Var x = constant(random_tensor({3, d}, 73));
    CHECK_THROWS_AS(multi_head_attention(x, x, x, 3, params), ConfigError);
  }

  SECTION("gradient matches central differences") {
    auto x = random_param("x", {2, 5, d}, 74);
    std::vector<Parameter> inputs = set.items();
    inputs.push_back(x);
    auto r = grad_check([&] { return probe_sum(multi_head_attention(x.var(), x.var(), x.var(), 2, params)); },
                        inputs);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("non-finite values raise instead of propagating", "[numerics][nan]") {
  Var big = constant(Tensor::vector({1e308}));
  CHECK_THROWS_AS(scale(big, 10.0), NumericError);
  CHECK_THROWS_AS(constant(Tensor::vector({std::numeric_limits<double>::quiet_NaN()})), NumericError);
  CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), DimensionError);
}

TEST_CASE("backward accumulates through shared subgraphs", "[numerics][tape]") {
  auto x = param("x", {1}, {3.0});
  // f = x*x + x  -> df/dx = 2x + 1 = 7
  Var f = sum(add(mul(x.var(), x.var()), x.var()));
  f.backward();
  CHECK(x.grad()[0] == 7.0);
  x.zero_grad();
  CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("parameter sets reject duplicate names", "[numerics][params]") {
  ParameterSet set;
  set.add_uniform("enc.kernel", {2, 2}, 2, 1);
  CHECK_THROWS_AS(set.add_uniform("enc.kernel", {2, 2}, 2, 1), ConfigError);
  ParameterSet other;
  auto& p = other.add_uniform("enc.kernel", {2, 2}, 2, 1);
  // same (seed, name) -> same initial values
  CHECK(p.value().storage() == set.at("enc.kernel").value().storage());
  for (double v : p.value().values()) CHECK(std::abs(v) <= std::sqrt(0.5));
}
