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

#include "cluesep/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "cluesep/error.hpp"

namespace cluesep::num {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

CMapMat cmat(const Tensor& t, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return CMapMat(t.data() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
MapMat mmat(Tensor& t, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return MapMat(t.data() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " differ");
  }
}

bool wants(const Node& n, std::size_t i) { return n.inputs[i]->requires_grad; }
Tensor& grad_of(Node& n, std::size_t i) { return n.inputs[i]->grad_buffer(); }

struct AxisSplit {
  std::size_t outer, n, inner;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                         shape_str(shape));
  }
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Var constant(Tensor t) {
  if (!t.all_finite()) throw NumericError("non-finite constant");
  return Var(std::move(t), false);
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  const auto bv = b.value().values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return make_result(std::move(out), {a, b}, "add", [](Node& n) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!wants(n, k)) continue;
      auto& g = grad_of(n, k);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  const auto bv = b.value().values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return make_result(std::move(out), {a, b}, "sub", [](Node& n) {
    if (wants(n, 0)) {
      auto& g = grad_of(n, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (wants(n, 1)) {
      auto& g = grad_of(n, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  const auto bv = b.value().values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return make_result(std::move(out), {a, b}, "mul", [](Node& n) {
    const auto& av = n.inputs[0]->value;
    const auto& bv = n.inputs[1]->value;
    if (wants(n, 0)) {
      auto& g = grad_of(n, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * bv[i];
    }
    if (wants(n, 1)) {
      auto& g = grad_of(n, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * av[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  Tensor out = a.value();
  for (auto& v : out.values()) v *= factor;
  return make_result(std::move(out), {a}, "scale", [factor](Node& n) {
    auto& g = grad_of(n, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * n.grad[i];
  });
}

namespace {

std::size_t trailing_dim(const Var& x, const Var& v, const char* op) {
  if (v.value().rank() != 1 || x.value().rank() == 0 || x.shape().back() != v.size()) {
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(v.shape()) + " over " +
                         shape_str(x.shape()));
  }
  return v.size();
}

}  // namespace

Var add_bias(const Var& x, const Var& bias) {
  const std::size_t d = trailing_dim(x, bias, "add_bias");
  Tensor out = x.value();
  const auto bv = bias.value().values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % d];
  return make_result(std::move(out), {x, bias}, "add_bias", [d](Node& n) {
    if (wants(n, 0)) {
      auto& g = grad_of(n, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (wants(n, 1)) {
      auto& g = grad_of(n, 1);
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i % d] += n.grad[i];
    }
  });
}

Var mul_bias(const Var& x, const Var& gain) {
  const std::size_t d = trailing_dim(x, gain, "mul_bias");
  Tensor out = x.value();
  const auto gv = gain.value().values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= gv[i % d];
  return make_result(std::move(out), {x, gain}, "mul_bias", [d](Node& n) {
    const auto& xv = n.inputs[0]->value;
    const auto& gv = n.inputs[1]->value;
    if (wants(n, 0)) {
      auto& g = grad_of(n, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * gv[i % d];
    }
    if (wants(n, 1)) {
      auto& g = grad_of(n, 1);
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i % d] += n.grad[i] * xv[i];
    }
  });
}

Var affine(const Var& x, const Var& weight, const Var& bias) {
  const auto& w = weight.value();
  if (w.rank() != 2 || x.value().rank() == 0 || x.shape().back() != w.dim(1)) {
    throw DimensionError("affine: weight " + shape_str(w.shape()) + " does not match input " + shape_str(x.shape()));
  }
  const std::size_t d_out = w.dim(0), d_in = w.dim(1);
  if (bias.defined() && (bias.value().rank() != 1 || bias.size() != d_out)) {
    throw DimensionError("affine: bias " + shape_str(bias.shape()) + " does not match " + std::to_string(d_out));
  }
  const std::size_t rows = x.size() / d_in;
  Shape out_shape = x.shape();
  out_shape.back() = d_out;
  Tensor out(out_shape);
  mmat(out, rows, d_out).noalias() = cmat(x.value(), rows, d_in) * cmat(w, d_out, d_in).transpose();
  if (bias.defined()) {
    const auto bv = bias.value().values();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < d_out; ++c) out[r * d_out + c] += bv[c];
  }
  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(std::move(out), std::move(inputs), "affine", [rows, d_in, d_out](Node& n) {
    const auto gy = cmat(n.grad, rows, d_out);
    if (wants(n, 0)) mmat(grad_of(n, 0), rows, d_in).noalias() += gy * cmat(n.inputs[1]->value, d_out, d_in);
    if (wants(n, 1))
      mmat(grad_of(n, 1), d_out, d_in).noalias() += gy.transpose() * cmat(n.inputs[0]->value, rows, d_in);
    if (n.inputs.size() > 2 && wants(n, 2)) {
      auto& gb = grad_of(n, 2);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < d_out; ++c) gb[c] += n.grad[r * d_out + c];
    }
  });
}

Var bmm(const Var& a, const Var& b, bool transpose_a, bool transpose_b, double alpha) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != bv.rank() || (av.rank() != 2 && av.rank() != 3)) {
    throw DimensionError("bmm: operands must both be rank 2 or rank 3, got " + shape_str(av.shape()) + " and " +
                         shape_str(bv.shape()));
  }
  const bool batched = av.rank() == 3;
  const std::size_t batch = batched ? av.dim(0) : 1;
  if (batched && bv.dim(0) != batch) throw DimensionError("bmm: batch extents differ");
  const std::size_t ar = av.dim(av.rank() - 2), ac = av.dim(av.rank() - 1);
  const std::size_t br = bv.dim(bv.rank() - 2), bc = bv.dim(bv.rank() - 1);
  const std::size_t m = transpose_a ? ac : ar, k = transpose_a ? ar : ac;
  const std::size_t kb = transpose_b ? bc : br, nn = transpose_b ? br : bc;
  if (k != kb) {
    throw DimensionError("bmm: inner extents differ for " + shape_str(av.shape()) + " and " + shape_str(bv.shape()));
  }
  Shape out_shape = batched ? Shape{batch, m, nn} : Shape{m, nn};
  Tensor out(out_shape);
  for (std::size_t i = 0; i < batch; ++i) {
    const auto A = cmat(av, ar, ac, i * ar * ac);
    const auto B = cmat(bv, br, bc, i * br * bc);
    auto C = mmat(out, m, nn, i * m * nn);
    if (!transpose_a && !transpose_b) C.noalias() = alpha * A * B;
    else if (!transpose_a && transpose_b) C.noalias() = alpha * A * B.transpose();
    else if (transpose_a && !transpose_b) C.noalias() = alpha * A.transpose() * B;
    else C.noalias() = alpha * A.transpose() * B.transpose();
  }
  return make_result(std::move(out), {a, b}, "bmm",
                     [batch, m, nn, ar, ac, br, bc, transpose_a, transpose_b, alpha](Node& n) {
                       const auto& a_val = n.inputs[0]->value;
                       const auto& b_val = n.inputs[1]->value;
                       for (std::size_t i = 0; i < batch; ++i) {
                         const auto G = cmat(n.grad, m, nn, i * m * nn);
                         const auto A = cmat(a_val, ar, ac, i * ar * ac);
                         const auto B = cmat(b_val, br, bc, i * br * bc);
                         if (wants(n, 0)) {
                           auto GA = mmat(grad_of(n, 0), ar, ac, i * ar * ac);
                           // d op(A) = alpha * G * op(B)^T
                           if (!transpose_a) {
                             if (!transpose_b) GA.noalias() += alpha * G * B.transpose();
                             else GA.noalias() += alpha * G * B;
                           } else {
                             if (!transpose_b) GA.noalias() += alpha * B * G.transpose();
                             else GA.noalias() += alpha * B.transpose() * G.transpose();
                           }
                         }
                         if (wants(n, 1)) {
                           auto GB = mmat(grad_of(n, 1), br, bc, i * br * bc);
                           // d op(B) = alpha * op(A)^T * G
                           if (!transpose_b) {
                             if (!transpose_a) GB.noalias() += alpha * A.transpose() * G;
                             else GB.noalias() += alpha * A * G;
                           } else {
                             if (!transpose_a) GB.noalias() += alpha * G.transpose() * A;
                             else GB.noalias() += alpha * G.transpose() * A.transpose();
                           }
                         }
                       }
                     });
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return make_result(std::move(out), {x}, "relu", [](Node& n) {
    auto& g = grad_of(n, 0);
    const auto& xv = n.inputs[0]->value;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] > 0.0) g[i] += n.grad[i];
  });
}

Var sigmoid(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  return make_result(std::move(out), {x}, "sigmoid", [](Node& n) {
    auto& g = grad_of(n, 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double y = n.value[i];
      g[i] += n.grad[i] * y * (1.0 - y);
    }
  });
}

Var softmax(const Var& x, std::size_t axis) {
  const auto s = split_axis(x.shape(), axis, "softmax");
  Tensor out = x.value();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t j = 0; j < s.inner; ++j) {
      double* p = out.data() + o * s.n * s.inner + j;
      double mx = p[0];
      for (std::size_t i = 1; i < s.n; ++i) mx = std::max(mx, p[i * s.inner]);
      double total = 0.0;
      for (std::size_t i = 0; i < s.n; ++i) {
        p[i * s.inner] = std::exp(p[i * s.inner] - mx);
        total += p[i * s.inner];
      }
      for (std::size_t i = 0; i < s.n; ++i) p[i * s.inner] /= total;
    }
  }
  return make_result(std::move(out), {x}, "softmax", [s](Node& n) {
    auto& g = grad_of(n, 0);
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t j = 0; j < s.inner; ++j) {
        const std::size_t base = o * s.n * s.inner + j;
        double dot = 0.0;
        for (std::size_t i = 0; i < s.n; ++i) dot += n.grad[base + i * s.inner] * n.value[base + i * s.inner];
        for (std::size_t i = 0; i < s.n; ++i) {
          const std::size_t idx = base + i * s.inner;
          g[idx] += n.value[idx] * (n.grad[idx] - dot);
        }
      }
    }
  });
}

Var layer_norm(const Var& x, std::size_t axis, double eps) {
  const auto s = split_axis(x.shape(), axis, "layer_norm");
  Tensor out = x.value();
  std::vector<double> inv_std(s.outer * s.inner);
  const double count = static_cast<double>(s.n);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t j = 0; j < s.inner; ++j) {
      double* p = out.data() + o * s.n * s.inner + j;
      double mu = 0.0;
      for (std::size_t i = 0; i < s.n; ++i) mu += p[i * s.inner];
      mu /= count;
      double var = 0.0;
      for (std::size_t i = 0; i < s.n; ++i) var += (p[i * s.inner] - mu) * (p[i * s.inner] - mu);
      var /= count;
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[o * s.inner + j] = is;
      for (std::size_t i = 0; i < s.n; ++i) p[i * s.inner] = (p[i * s.inner] - mu) * is;
    }
  }
  return make_result(std::move(out), {x}, "layer_norm", [s, inv_std = std::move(inv_std)](Node& n) {
    auto& g = grad_of(n, 0);
    const double count = static_cast<double>(s.n);
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t j = 0; j < s.inner; ++j) {
        const std::size_t base = o * s.n * s.inner + j;
        double mg = 0.0, mgy = 0.0;
        for (std::size_t i = 0; i < s.n; ++i) {
          const std::size_t idx = base + i * s.inner;
          mg += n.grad[idx];
          mgy += n.grad[idx] * n.value[idx];
        }
        mg /= count;
        mgy /= count;
        const double is = inv_std[o * s.inner + j];
        for (std::size_t i = 0; i < s.n; ++i) {
          const std::size_t idx = base + i * s.inner;
          g[idx] += is * (n.grad[idx] - mg - n.value[idx] * mgy);
        }
      }
    }
  });
}

Var elementwise(Elementwise kind, const Var& x, std::optional<std::size_t> axis) {
  switch (kind) {
    case Elementwise::kRelu:
      return relu(x);
    case Elementwise::kSigmoid:
      return sigmoid(x);
    case Elementwise::kSoftmax:
      if (!axis) throw ConfigError("softmax needs an axis");
      return softmax(x, *axis);
    case Elementwise::kLayerNorm:
      if (!axis) throw ConfigError("layer_norm needs an axis");
      return layer_norm(x, *axis);
  }
  throw ConfigError("unknown elementwise kind");
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_result(std::move(out), {x}, "reshape", [](Node& n) {
    auto& g = grad_of(n, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  });
}

namespace {

// Visits every output index of a permutation; calls f(out_flat, in_flat).
template <typename F>
void for_each_permuted(const Shape& in_shape, const std::vector<std::size_t>& perm, F&& f) {
  const std::size_t rank = in_shape.size();
  std::vector<std::size_t> in_stride(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_stride[i - 1] = in_stride[i] * in_shape[i];
  std::vector<std::size_t> out_shape(rank), stride(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = in_shape[perm[i]];
    stride[i] = in_stride[perm[i]];
  }
  const std::size_t total = numel(in_shape);
  if (total == 0) return;
  const std::size_t last = out_shape[rank - 1], last_stride = stride[rank - 1];
  std::vector<std::size_t> idx(rank, 0);
  std::size_t in_base = 0;
  for (std::size_t out = 0; out < total; out += last) {
    for (std::size_t j = 0; j < last; ++j) f(out + j, in_base + j * last_stride);
    // advance the multi-index over all axes but the last
    for (std::size_t ax = rank - 1; ax-- > 0;) {
      if (++idx[ax] < out_shape[ax]) {
        in_base += stride[ax];
        break;
      }
      in_base -= stride[ax] * (out_shape[ax] - 1);
      idx[ax] = 0;
    }
  }
}

}  // namespace

Var permute(const Var& x, const std::vector<std::size_t>& perm) {
  const auto& in_shape = x.shape();
  if (perm.size() != in_shape.size()) throw DimensionError("permute: rank mismatch");
  std::vector<bool> used(perm.size(), false);
  for (auto p : perm) {
    if (p >= perm.size() || used[p]) throw DimensionError("permute: not a permutation");
    used[p] = true;
  }
  Shape out_shape(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = in_shape[perm[i]];
  Tensor out(out_shape);
  const auto& xv = x.value();
  for_each_permuted(in_shape, perm, [&](std::size_t o, std::size_t i) { out[o] = xv[i]; });
  return make_result(std::move(out), {x}, "permute", [in_shape, perm](Node& n) {
    auto& g = grad_of(n, 0);
    for_each_permuted(in_shape, perm, [&](std::size_t o, std::size_t i) { g[i] += n.grad[o]; });
  });
}

Var transpose(const Var& x) {
  if (x.value().rank() != 2) throw DimensionError("transpose: rank 2 required, got " + shape_str(x.shape()));
  return permute(x, {1, 0});
}

Var concat(const Var& a, const Var& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.size() != bs.size() || as.empty() || !std::equal(as.begin(), as.end() - 1, bs.begin())) {
    throw DimensionError("concat: incompatible shapes " + shape_str(as) + " and " + shape_str(bs));
  }
  const std::size_t da = as.back(), db = bs.back(), rows = a.size() / da;
  Shape out_shape = as;
  out_shape.back() = da + db;
  Tensor out(out_shape);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.value().data() + r * da, da, out.data() + r * (da + db));
    std::copy_n(b.value().data() + r * db, db, out.data() + r * (da + db) + da);
  }
  return make_result(std::move(out), {a, b}, "concat", [rows, da, db](Node& n) {
    if (wants(n, 0)) {
      auto& g = grad_of(n, 0);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < da; ++c) g[r * da + c] += n.grad[r * (da + db) + c];
    }
    if (wants(n, 1)) {
      auto& g = grad_of(n, 1);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < db; ++c) g[r * db + c] += n.grad[r * (da + db) + da + c];
    }
  });
}

Var sum(const Var& x) {
  const auto v = x.value().values();
  Tensor out(Shape{});
  out[0] = std::accumulate(v.begin(), v.end(), 0.0);
  return make_result(std::move(out), {x}, "sum", [](Node& n) {
    auto& g = grad_of(n, 0);
    for (auto& gi : g.values()) gi += n.grad[0];
  });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

namespace {

// cols[(c*K + k) x T'] = x[c, t*stride + k]
void im2col(const double* x, std::size_t channels, std::size_t length, std::size_t kernel, std::size_t stride,
            std::size_t frames, double* cols) {
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t k = 0; k < kernel; ++k) {
      double* row = cols + (c * kernel + k) * frames;
      const double* src = x + c * length + k;
      for (std::size_t t = 0; t < frames; ++t) row[t] = src[t * stride];
    }
}

void col2im_add(const double* cols, std::size_t channels, std::size_t length, std::size_t kernel,
                std::size_t stride, std::size_t frames, double* x) {
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t k = 0; k < kernel; ++k) {
      const double* row = cols + (c * kernel + k) * frames;
      double* dst = x + c * length + k;
      for (std::size_t t = 0; t < frames; ++t) dst[t * stride] += row[t];
    }
}

}  // namespace

Var conv1d(const Var& input, const Var& kernel, std::size_t stride) {
  const auto& x = input.value();
  const auto& w = kernel.value();
  if (x.rank() != 2 || w.rank() != 3 || w.dim(1) != x.dim(0)) {
    throw DimensionError("conv1d: kernel " + shape_str(w.shape()) + " does not match input " + shape_str(x.shape()));
  }
  const std::size_t f_in = x.dim(0), len = x.dim(1), f_out = w.dim(0), k = w.dim(2);
  if (k < 1 || stride < 1) throw ConfigError("conv1d: kernel size and stride must be >= 1");
  if (len < k) {
    throw DimensionError("conv1d: input length " + std::to_string(len) + " shorter than kernel " + std::to_string(k));
  }
  const std::size_t frames = (len - k) / stride + 1;
  auto cols = std::make_shared<Tensor>(Shape{f_in * k, frames});
  im2col(x.data(), f_in, len, k, stride, frames, cols->data());
  Tensor out({f_out, frames});
  mmat(out, f_out, frames).noalias() = cmat(w, f_out, f_in * k) * cmat(*cols, f_in * k, frames);
  return make_result(std::move(out), {input, kernel}, "conv1d", [=](Node& n) {
    const auto G = cmat(n.grad, f_out, frames);
    if (wants(n, 0)) {
      Tensor dcols({f_in * k, frames});
      mmat(dcols, f_in * k, frames).noalias() = cmat(n.inputs[1]->value, f_out, f_in * k).transpose() * G;
      col2im_add(dcols.data(), f_in, len, k, stride, frames, grad_of(n, 0).data());
    }
    if (wants(n, 1)) mmat(grad_of(n, 1), f_out, f_in * k).noalias() += G * cmat(*cols, f_in * k, frames).transpose();
  });
}

Var conv_transpose1d(const Var& input, const Var& kernel, std::size_t stride, std::optional<std::size_t> output_length) {
  const auto& x = input.value();
  const auto& w = kernel.value();
  if (x.rank() != 2 || w.rank() != 3 || w.dim(0) != x.dim(0)) {
    throw DimensionError("conv_transpose1d: kernel " + shape_str(w.shape()) + " does not match input " +
                         shape_str(x.shape()));
  }
  const std::size_t f_in = x.dim(0), frames = x.dim(1), f_out = w.dim(1), k = w.dim(2);
  if (k < 1 || stride < 1) throw ConfigError("conv_transpose1d: kernel size and stride must be >= 1");
  if (frames < 1) throw DimensionError("conv_transpose1d: empty input");
  const std::size_t full = (frames - 1) * stride + k;
  Tensor cols({f_out * k, frames});
  mmat(cols, f_out * k, frames).noalias() = cmat(w, f_in, f_out * k).transpose() * cmat(x, f_in, frames);
  Tensor out({f_out, full});
  col2im_add(cols.data(), f_out, full, k, stride, frames, out.data());
  Var result = make_result(std::move(out), {input, kernel}, "conv_transpose1d", [=](Node& n) {
    Tensor gcols({f_out * k, frames});
    im2col(n.grad.data(), f_out, full, k, stride, frames, gcols.data());
    const auto GC = cmat(gcols, f_out * k, frames);
    if (wants(n, 0)) mmat(grad_of(n, 0), f_in, frames).noalias() += cmat(n.inputs[1]->value, f_in, f_out * k) * GC;
    if (wants(n, 1))
      mmat(grad_of(n, 1), f_in, f_out * k).noalias() += cmat(n.inputs[0]->value, f_in, frames) * GC.transpose();
  });
  if (output_length && *output_length != full) return fit_length(result, *output_length);
  return result;
}

void check_mirrored(const ConvGeometry& encoder, const ConvGeometry& decoder) {
  if (encoder.kernel != decoder.kernel || encoder.stride != decoder.stride) {
    throw ConfigError("decoder (kernel " + std::to_string(decoder.kernel) + ", stride " +
                      std::to_string(decoder.stride) + ") does not mirror encoder (kernel " +
                      std::to_string(encoder.kernel) + ", stride " + std::to_string(encoder.stride) + ")");
  }
}

Var fit_length(const Var& x, std::size_t length) {
  const auto& xv = x.value();
  if (xv.rank() == 0) throw DimensionError("fit_length: scalar input");
  const std::size_t cur = xv.shape().back(), rows = xv.size() / (cur == 0 ? 1 : cur);
  Shape out_shape = xv.shape();
  out_shape.back() = length;
  Tensor out(out_shape);
  const std::size_t keep = std::min(cur, length);
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(xv.data() + r * cur, keep, out.data() + r * length);
  return make_result(std::move(out), {x}, "fit_length", [rows, cur, length, keep](Node& n) {
    auto& g = grad_of(n, 0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t t = 0; t < keep; ++t) g[r * cur + t] += n.grad[r * length + t];
  });
}

AttentionParams make_attention_params(ParameterSet& set, const std::string& prefix, std::size_t dim,
                                      std::uint64_t seed) {
  AttentionParams p;
  p.wq = set.add_uniform(prefix + ".wq", {dim, dim}, dim, seed);
  p.bq = set.add_uniform(prefix + ".bq", {dim}, dim, seed);
  p.wk = set.add_uniform(prefix + ".wk", {dim, dim}, dim, seed);
  p.bk = set.add_uniform(prefix + ".bk", {dim}, dim, seed);
  p.wv = set.add_uniform(prefix + ".wv", {dim, dim}, dim, seed);
  p.bv = set.add_uniform(prefix + ".bv", {dim}, dim, seed);
  p.wo = set.add_uniform(prefix + ".wo", {dim, dim}, dim, seed);
  p.bo = set.add_uniform(prefix + ".bo", {dim}, dim, seed);
  return p;
}

Var multi_head_attention(const Var& q, const Var& k, const Var& v, std::size_t heads, const AttentionParams& params) {
  const auto& qs = q.shape();
  if (qs.size() != 2 && qs.size() != 3) throw DimensionError("attention: input must be [T x D] or [B x T x D]");
  if (k.shape() != v.shape() || k.shape().size() != qs.size()) throw DimensionError("attention: k/v shapes differ");
  const bool batched = qs.size() == 3;
  const std::size_t batch = batched ? qs[0] : 1;
  const std::size_t tq = qs[qs.size() - 2], d = qs.back();
  const std::size_t tk = k.shape()[qs.size() - 2];
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("attention: model dim " + std::to_string(d) + " not divisible by " + std::to_string(heads) +
                      " heads");
  }
  const std::size_t dh = d / heads;
  auto split_heads = [&](const Var& x, std::size_t t) {
    // [B, T, H, dh] -> [B, H, T, dh] -> [B*H, T, dh]
    Var r = reshape(x, {batch, t, heads, dh});
    if (heads > 1) r = permute(r, {0, 2, 1, 3});
    return reshape(r, {batch * heads, t, dh});
  };
  Var qh = split_heads(affine(q, params.wq.var(), params.bq.var()), tq);
  Var kh = split_heads(affine(k, params.wk.var(), params.bk.var()), tk);
  Var vh = split_heads(affine(v, params.wv.var(), params.bv.var()), tk);
  Var scores = bmm(qh, kh, false, true, 1.0 / std::sqrt(static_cast<double>(dh)));
  Var weights = softmax(scores, 2);
  Var ctx = bmm(weights, vh);
  ctx = reshape(ctx, {batch, heads, tq, dh});
  if (heads > 1) ctx = permute(ctx, {0, 2, 1, 3});
  ctx = reshape(ctx, batched ? Shape{batch, tq, d} : Shape{tq, d});
  return affine(ctx, params.wo.var(), params.bo.var());
}

}  // namespace cluesep::num
