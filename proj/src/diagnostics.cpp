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

#include "cluesep/diagnostics.hpp"

#include <cmath>
#include <functional>

#include "cluesep/clue.hpp"
#include "cluesep/grad_check.hpp"
#include "cluesep/model.hpp"
#include "cluesep/ops.hpp"
#include "cluesep/rng.hpp"
#include "cluesep/separator.hpp"
#include "cluesep/train.hpp"

namespace cluesep::diag {

using num::Parameter;
using num::Shape;
using num::Tensor;
using num::Var;

namespace {

constexpr double kLinearTol = 1e-5;
constexpr double kTol = 1e-4;

class Suite {
 public:
  explicit Suite(std::uint64_t seed) : seed_(seed) {}

  Parameter param(const std::string& name, Shape shape, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    Rng rng(derive_seed(seed_, {fnv1a(name), counter_++}));
    for (auto& v : t.values()) v = rng.uniform(lo, hi);
    return Parameter(name, std::move(t));
  }

  // Same, with every value at least `gap` away from zero (relu kinks).
  Parameter away_from_zero(const std::string& name, Shape shape, double gap = 1e-2) {
    Parameter p = param(name, std::move(shape));
    for (auto& v : p.mutable_value().values()) v = v < 0 ? v - gap : v + gap;
    return p;
  }

  // Weighted sum with fixed weights so each output coordinate matters. The
  // weights depend only on the size, so repeated calls see the same function.
  Var probe(const Var& x) const {
    Tensor w(x.shape());
    Rng rng(derive_seed(seed_, {0x9e0beULL, x.value().size()}));
    for (auto& v : w.values()) v = rng.uniform(0.5, 1.5);
    return num::sum(num::mul(x, num::constant(std::move(w))));
  }

  void check(const std::string& name, double tol, const std::function<Var()>& fn, std::vector<Parameter> inputs,
             std::size_t max_probes = 0) {
    num::GradCheckOptions opt;
    opt.max_probes = max_probes;
    const auto r = num::grad_check(fn, std::move(inputs), opt);
    entries_.push_back({name, r.max_rel_error, tol, r.probes, r.worst_input});
  }

  void add(GradCheckEntry e) { entries_.push_back(std::move(e)); }
  std::vector<GradCheckEntry> take() { return std::move(entries_); }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  std::vector<GradCheckEntry> entries_;
};

}  // namespace

std::vector<GradCheckEntry> gradcheck_suite(std::uint64_t seed) {
  Suite s(seed);

  // linear and multilinear ops
  {
    auto a = s.param("a", {3, 4}), b = s.param("b", {3, 4});
    s.check("add", kLinearTol, [&] { return s.probe(num::add(a.var(), b.var())); }, {a, b});
    s.check("sub", kLinearTol, [&] { return s.probe(num::sub(a.var(), b.var())); }, {a, b});
    s.check("mul", kLinearTol, [&] { return s.probe(num::mul(a.var(), b.var())); }, {a, b});
    s.check("scale", kLinearTol, [&] { return s.probe(num::scale(a.var(), -2.5)); }, {a});
    s.check("reshape", kLinearTol, [&] { return s.probe(num::reshape(a.var(), {2, 6})); }, {a});
    s.check("transpose", kLinearTol, [&] { return s.probe(num::transpose(a.var())); }, {a});
    s.check("concat", kLinearTol, [&] { return s.probe(num::concat(a.var(), b.var())); }, {a, b});
    s.check("sum", kLinearTol, [&] { return num::sum(a.var()); }, {a});
    s.check("mean", kLinearTol, [&] { return num::mean(a.var()); }, {a});
  }
  {
    auto x = s.param("x", {2, 3, 4}), v = s.param("v", {4});
    s.check("add_bias", kLinearTol, [&] { return s.probe(num::add_bias(x.var(), v.var())); }, {x, v});
    s.check("mul_bias", kLinearTol, [&] { return s.probe(num::mul_bias(x.var(), v.var())); }, {x, v});
    s.check("permute", kLinearTol, [&] { return s.probe(num::permute(x.var(), {2, 0, 1})); }, {x});
    auto w = s.param("w", {5, 4}), bias = s.param("bias", {5});
    s.check("affine", kLinearTol, [&] { return s.probe(num::affine(x.var(), w.var(), bias.var())); }, {x, w, bias});
    auto p = s.param("p", {2, 4, 3}), q = s.param("q", {2, 4, 5});
    s.check("bmm", kLinearTol, [&] { return s.probe(num::bmm(p.var(), q.var(), true, false, 0.7)); }, {p, q});
  }
  {
    auto in = s.param("in", {2, 23}), k = s.param("k", {3, 2, 4});
    s.check("conv1d", kLinearTol, [&] { return s.probe(num::conv1d(in.var(), k.var(), 2)); }, {in, k});
    auto h = s.param("h", {3, 10}), kt = s.param("kt", {3, 2, 4});
    s.check("conv_transpose1d", kLinearTol, [&] { return s.probe(num::conv_transpose1d(h.var(), kt.var(), 2)); },
            {h, kt});
    s.check("fit_length", kLinearTol, [&] { return s.probe(num::fit_length(h.var(), 7)); }, {h});
    auto g = s.param("g", {3, 13});
    s.check("chunk", kLinearTol, [&] { return s.probe(sep::chunk(g.var(), 4).data); }, {g});
    auto c = s.param("c", {5, 4, 3});
    s.check("unchunk", kLinearTol, [&] { return s.probe(sep::unchunk({c.var(), 12})); }, {c});
  }

  // nonlinear ops
  {
    auto x = s.away_from_zero("x", {4, 6});
    s.check("relu", kTol, [&] { return s.probe(num::relu(x.var())); }, {x});
    s.check("sigmoid", kTol, [&] { return s.probe(num::sigmoid(x.var())); }, {x});
    s.check("softmax", kTol, [&] { return s.probe(num::softmax(x.var(), 1)); }, {x});
    s.check("layer_norm", kTol, [&] { return s.probe(num::layer_norm(x.var(), 1)); }, {x});
  }
  {
    num::ParameterSet ps;
    const auto ap = num::make_attention_params(ps, "attn", 6, seed);
    auto q = s.param("q", {2, 5, 6});
    std::vector<Parameter> in{q};
    for (const auto& p : ps.items())
      if (p.name() != "attn.bk") in.push_back(p);
    s.check("multi_head_attention", kTol, [&] { return s.probe(num::multi_head_attention(q.var(), q.var(), q.var(), 2, ap)); },
            in);
  }
  {
    auto a = s.param("A", {5, 7}), u = s.param("u", {1, 5});
    const Var b = num::constant(Tensor({1}, 0.1));
    s.check("attention_pool", kTol, [&] { return s.probe(clue::attention_pool(a.var(), u.var(), b)); }, {a, u});
    auto ca = s.param("c_a", {4}), ct = s.param("c_t", {4}), w = s.param("gw", {4, 8}), gb = s.param("gb", {4});
    s.check("gated_fuse", kTol, [&] { return s.probe(clue::gated_fuse(ca.var(), ct.var(), w.var(), gb.var())); },
            {ca, ct, w, gb});
  }
  {
    auto est = s.param("estimate", {48});
    std::vector<double> ref(48);
    Rng rng(derive_seed(seed, {0x5d7ULL}));
    for (auto& v : ref) v = rng.normal();
    s.check("si_sdr_loss", kLinearTol, [&] { return train::si_sdr_loss({est.var()}, {ref}); }, {est});
  }

  // full composition at a toy size
  {
    ModelConfig mc;
    mc.sep.channels = 16;
    mc.sep.kernel = 4;
    mc.sep.stride = 2;
    mc.sep.chunk = 10;
    mc.sep.heads = 2;
    mc.sep.ff_dim = 16;
    mc.seed = seed + 11;
    Model model(mc);
    clue::HashTextEncoder enc;
    Rng rng(derive_seed(seed, {0xe2eULL}));
    std::vector<double> x(64), ref(64);
    for (auto& v : x) v = 0.3 * rng.normal();
    for (auto& v : ref) v = 0.3 * rng.normal();
    clue::ClueBundle bundle;
    bundle.audio = dsp::Waveform{};
    bundle.audio->samples.resize(40);
    for (auto& v : bundle.audio->samples) v = 0.3 * rng.normal();
    bundle.text = "A lady with a high voice";
    auto shift_only = [](const std::string& n) { return n == "clue.pool.b" || n.ends_with(".attn.bk"); };
    std::vector<Parameter> in;
    for (const auto& p : model.params().items())
      if (!shift_only(p.name())) in.push_back(p);
    auto loss = [&] { return train::si_sdr_loss({model.extract(x, bundle, enc)}, {ref}); };
    s.check("extract->si_sdr_loss", kTol, loss, in, 6);

    model.params().zero_grad();
    loss().backward();
    GradCheckEntry e{"shift-invariant biases (|grad|)", 0.0, 1e-9, 0, ""};
    for (const auto& p : model.params().items()) {
      if (!shift_only(p.name())) continue;
      for (double g : p.grad().values()) {
        ++e.probes;
        if (std::abs(g) >= e.error) {
          e.error = std::abs(g);
          e.worst = p.name();
        }
      }
    }
    s.add(e);
  }
  return s.take();
}

}  // namespace cluesep::diag
