// Copyright 2026 The SK-Net Authors. All Rights Reserved.
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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "sknet/gemm.hpp"
#include "sknet/tensor.hpp"

namespace sknet {

enum class Mode { train, eval };

using Rng = std::mt19937_64;

// ---------------------------------------------------------------------------
// Dense layers and activations. Feature channels always live on the trailing
// axis; every leading axis is treated as a batch of rows.
// ---------------------------------------------------------------------------

/// y = x W + b over the trailing axis. `bias` may be undefined.
inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {}) {
  require<DimensionError>(x.rank() >= 1 && weight.rank() == 2,
                          "linear: expected x[...,Cin] and W[Cin,Cout], got ", shape_str(x.shape()),
                          " and ", shape_str(weight.shape()));
  const std::size_t cin = weight.dim(0);
  const std::size_t cout = weight.dim(1);
  require<DimensionError>(x.shape().back() == cin, "linear: x ", shape_str(x.shape()),
                          " does not match W ", shape_str(weight.shape()));
  if (bias.defined())
    require<DimensionError>(bias.numel() == cout, "linear: bias ", shape_str(bias.shape()),
                            " does not match W ", shape_str(weight.shape()));
  const std::size_t rows = x.numel() / cin;
  std::vector<double> y(rows * cout);
  kernels::gemm(x.data().data(), weight.data().data(), y.data(), rows, cin, cout);
  if (bias.defined()) {
    const double* b = bias.data().data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cout; ++c) y[r * cout + c] += b[c];
  }
  Shape shape = x.shape();
  shape.back() = cout;
  return make_result(
      std::move(shape), std::move(y), {x, weight, bias},
      [x, weight, bias, rows, cin, cout](const detail::TensorImpl& out) {
        const double* dy = out.grad.data();
        if (auto gx = detail::input_grad(x); !gx.empty()) {
          std::vector<double> wt(cout * cin);
          kernels::transpose(weight.data().data(), cin, cout, wt.data());
          kernels::gemm(dy, wt.data(), gx.data(), rows, cout, cin, true);
        }
        if (auto gw = detail::input_grad(weight); !gw.empty()) {
          std::vector<double> xt(cin * rows);
          kernels::transpose(x.data().data(), rows, cin, xt.data());
          kernels::gemm(xt.data(), dy, gw.data(), cin, rows, cout, true);
        }
        if (auto gb = detail::input_grad(bias); !gb.empty()) {
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cout; ++c) gb[c] += dy[r * cout + c];
        }
      },
      "linear");
}

/// max(0,x) + a*min(0,x) with one slope per trailing channel. At x == 0 the
/// zero branch is taken, so neither x nor a receives gradient there.
inline Tensor prelu(const Tensor& x, const Tensor& slope) {
  require<DimensionError>(x.rank() >= 1 && slope.numel() == x.shape().back(),
                          "prelu: ", slope.numel(), " slopes for input ", shape_str(x.shape()));
  const std::size_t channels = slope.numel();
  const auto xs = x.data();
  const auto as = slope.data();
  std::vector<double> y(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i)
    y[i] = xs[i] > 0.0 ? xs[i] : as[i % channels] * xs[i];
  return make_result(
      x.shape(), std::move(y), {x, slope},
      [x, slope, channels](const detail::TensorImpl& out) {
        const auto xs = x.data();
        const auto as = slope.data();
        const double* dy = out.grad.data();
        auto gx = detail::input_grad(x);
        auto ga = detail::input_grad(slope);
        for (std::size_t i = 0; i < xs.size(); ++i) {
          const std::size_t c = i % channels;
          if (xs[i] > 0.0) {
            if (!gx.empty()) gx[i] += dy[i];
          } else if (xs[i] < 0.0) {
            if (!gx.empty()) gx[i] += as[c] * dy[i];
            if (!ga.empty()) ga[c] += xs[i] * dy[i];
          }
        }
      },
      "prelu");
}

inline Tensor relu(const Tensor& x) {
  const auto xs = x.data();
  std::vector<double> y(xs.size());
  // NaN passes through so that divergence reaches the loss check.
  for (std::size_t i = 0; i < xs.size(); ++i) y[i] = xs[i] < 0.0 ? 0.0 : xs[i];
  return make_result(
      x.shape(), std::move(y), {x},
      [x](const detail::TensorImpl& out) {
        auto gx = detail::input_grad(x);
        const auto xs = x.data();
        for (std::size_t i = 0; i < xs.size(); ++i)
          if (xs[i] > 0.0) gx[i] += out.grad[i];
      },
      "relu");
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

/// Running statistics of one batch-norm layer.
struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  bool initialized = false;
  double momentum = 0.9;
  double eps = 1e-5;
};

/// Normalizes every trailing channel over all leading axes. Train mode uses
/// batch statistics and folds them into the running averages; eval mode uses
/// the running averages only.
inline Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         BatchNormState& state, Mode mode) {
  require<DimensionError>(x.rank() >= 1 && gamma.numel() == x.shape().back() &&
                              beta.numel() == x.shape().back(),
                          "batch_norm: input ", shape_str(x.shape()), " with ", gamma.numel(),
                          " scales and ", beta.numel(), " shifts");
  const std::size_t channels = gamma.numel();
  const std::size_t rows = x.numel() / channels;
  require<DimensionError>(rows > 0, "batch_norm: empty input");
  const auto xs = x.data();
  const auto gs = gamma.data();
  const auto bs = beta.data();
  const double eps = state.eps;

  if (mode == Mode::eval) {
    require<UninitializedStatsError>(state.initialized,
                                     "batch_norm: eval mode before any training statistics");
    std::vector<double> inv_std(channels);
    for (std::size_t c = 0; c < channels; ++c)
      inv_std[c] = 1.0 / std::sqrt(state.running_var[c] + eps);
    std::vector<double> y(xs.size());
    const double* mean = state.running_mean.data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t i = r * channels + c;
        y[i] = gs[c] * (xs[i] - mean[c]) * inv_std[c] + bs[c];
      }
    std::vector<double> running_mean = state.running_mean;
    return make_result(
        x.shape(), std::move(y), {x, gamma, beta},
        [x, gamma, beta, inv_std, running_mean, rows, channels](const detail::TensorImpl& out) {
          const double* dy = out.grad.data();
          const auto xs = x.data();
          const auto gs = gamma.data();
          auto gx = detail::input_grad(x);
          auto gg = detail::input_grad(gamma);
          auto gb = detail::input_grad(beta);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < channels; ++c) {
              const std::size_t i = r * channels + c;
              if (!gx.empty()) gx[i] += dy[i] * gs[c] * inv_std[c];
              if (!gg.empty()) gg[c] += dy[i] * (xs[i] - running_mean[c]) * inv_std[c];
              if (!gb.empty()) gb[c] += dy[i];
            }
        },
        "batch_norm_eval");
  }

  std::vector<double> mean(channels, 0.0);
  std::vector<double> var(channels, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < channels; ++c) mean[c] += xs[r * channels + c];
  for (auto& m : mean) m /= static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < channels; ++c) {
      const double d = xs[r * channels + c] - mean[c];
      var[c] += d * d;
    }
  for (auto& v : var) v /= static_cast<double>(rows);

  std::vector<double> inv_std(channels);
  for (std::size_t c = 0; c < channels; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
  std::vector<double> xhat(xs.size());
  std::vector<double> y(xs.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t i = r * channels + c;
      xhat[i] = (xs[i] - mean[c]) * inv_std[c];
      y[i] = gs[c] * xhat[i] + bs[c];
    }

  // Running variance uses the unbiased estimate when more than one row exists.
  const double unbias = rows > 1 ? static_cast<double>(rows) / static_cast<double>(rows - 1) : 1.0;
  if (!state.initialized) {
    state.running_mean = mean;
    state.running_var.resize(channels);
    for (std::size_t c = 0; c < channels; ++c) state.running_var[c] = var[c] * unbias;
    state.initialized = true;
  } else {
    require<DimensionError>(state.running_mean.size() == channels,
                            "batch_norm: running stats sized for ", state.running_mean.size(),
                            " channels, input has ", channels);
    const double m = state.momentum;
    for (std::size_t c = 0; c < channels; ++c) {
      state.running_mean[c] = m * state.running_mean[c] + (1.0 - m) * mean[c];
      state.running_var[c] = m * state.running_var[c] + (1.0 - m) * var[c] * unbias;
    }
  }

  return make_result(
      x.shape(), std::move(y), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std, rows,
       channels](const detail::TensorImpl& out) {
        const double* dy = out.grad.data();
        const auto gs = gamma.data();
        std::vector<double> sum_dy(channels, 0.0);
        std::vector<double> sum_dy_xhat(channels, 0.0);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t i = r * channels + c;
            sum_dy[c] += dy[i];
            sum_dy_xhat[c] += dy[i] * xhat[i];
          }
        if (auto gg = detail::input_grad(gamma); !gg.empty())
          for (std::size_t c = 0; c < channels; ++c) gg[c] += sum_dy_xhat[c];
        if (auto gb = detail::input_grad(beta); !gb.empty())
          for (std::size_t c = 0; c < channels; ++c) gb[c] += sum_dy[c];
        if (auto gx = detail::input_grad(x); !gx.empty()) {
          const double inv_rows = 1.0 / static_cast<double>(rows);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < channels; ++c) {
              const std::size_t i = r * channels + c;
              gx[i] += gs[c] * inv_std[c] *
                       (dy[i] - inv_rows * sum_dy[c] - xhat[i] * inv_rows * sum_dy_xhat[c]);
            }
        }
      },
      "batch_norm_train");
}

// ---------------------------------------------------------------------------
// Reductions and shape manipulation
// ---------------------------------------------------------------------------

struct PoolResult {
  Tensor values;
  /// Position along the pooled axis of every output element.
  std::vector<std::size_t> argmax;
};

/// Max over one axis. Ties resolve to the lowest index; gradient goes to the
/// winning position only.
inline PoolResult max_pool_axis(const Tensor& x, std::size_t axis) {
  require<DimensionError>(axis < x.rank(), "max_pool_axis: axis ", axis, " invalid for ",
                          shape_str(x.shape()));
  const std::size_t len = x.dim(axis);
  require<DimensionError>(len > 0, "max_pool_axis: empty axis ", axis, " in ",
                          shape_str(x.shape()));
  std::size_t outer = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= x.dim(a);
  std::size_t inner = 1;
  for (std::size_t a = axis + 1; a < x.rank(); ++a) inner *= x.dim(a);

  const auto xs = x.data();
  std::vector<double> y(outer * inner);
  std::vector<std::size_t> arg(outer * inner, 0);
  for (std::size_t o = 0; o < outer; ++o) {
    const double* base = xs.data() + o * len * inner;
    double* yo = y.data() + o * inner;
    std::size_t* ao = arg.data() + o * inner;
    std::copy(base, base + inner, yo);
    for (std::size_t l = 1; l < len; ++l) {
      const double* row = base + l * inner;
      for (std::size_t i = 0; i < inner; ++i)
        if (row[i] > yo[i] || row[i] != row[i]) {  // a NaN anywhere wins
          yo[i] = row[i];
          ao[i] = l;
        }
    }
  }
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor values = make_result(
      std::move(shape), std::move(y), {x},
      [x, arg, len, inner, outer](const detail::TensorImpl& out) {
        auto gx = detail::input_grad(x);
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t k = o * inner + i;
            gx[(o * len + arg[k]) * inner + i] += out.grad[k];
          }
      },
      "max_pool_axis");
  return {std::move(values), std::move(arg)};
}

/// Concatenation along `axis`; all other extents must agree.
inline Tensor concat(std::span<const Tensor> xs, std::size_t axis) {
  require<DimensionError>(!xs.empty(), "concat: no inputs");
  const Shape& first = xs[0].shape();
  require<DimensionError>(axis < first.size(), "concat: axis ", axis, " invalid for ",
                          shape_str(first));
  Shape shape = first;
  shape[axis] = 0;
  for (const Tensor& t : xs) {
    bool ok = t.rank() == first.size();
    for (std::size_t a = 0; ok && a < first.size(); ++a)
      ok = a == axis || t.dim(a) == first[a];
    require<DimensionError>(ok, "concat: incompatible shapes ", shape_str(first), " and ",
                            shape_str(t.shape()), " on axis ", axis);
    shape[axis] += t.dim(axis);
  }
  std::size_t outer = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= first[a];
  std::size_t inner = 1;
  for (std::size_t a = axis + 1; a < first.size(); ++a) inner *= first[a];

  const std::size_t out_stride = shape[axis] * inner;
  std::vector<double> y(outer * out_stride);
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const Tensor& t : xs) {
    const std::size_t w = t.dim(axis) * inner;
    const auto src = t.data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(src.data() + o * w, w, y.data() + o * out_stride + offset);
    widths.push_back(w);
    offset += w;
  }
  std::vector<Tensor> inputs(xs.begin(), xs.end());
  return make_result(
      std::move(shape), std::move(y), inputs,
      [inputs, widths, outer, out_stride](const detail::TensorImpl& out) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          const std::size_t w = widths[k];
          if (auto g = detail::input_grad(inputs[k]); !g.empty())
            for (std::size_t o = 0; o < outer; ++o)
              for (std::size_t i = 0; i < w; ++i) g[o * w + i] += out.grad[o * out_stride + offset + i];
          offset += w;
        }
      },
      "concat");
}

inline Tensor concat(std::initializer_list<Tensor> xs, std::size_t axis) {
  return concat(std::span<const Tensor>(xs.begin(), xs.size()), axis);
}

inline Tensor reshape(const Tensor& x, Shape shape) {
  require<DimensionError>(shape_numel(shape) == x.numel(), "reshape: cannot view ",
                          shape_str(x.shape()), " as ", shape_str(shape));
  std::vector<double> y(x.data().begin(), x.data().end());
  return make_result(
      std::move(shape), std::move(y), {x},
      [x](const detail::TensorImpl& out) {
        auto gx = detail::input_grad(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += out.grad[i];
      },
      "reshape");
}

inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result(
      {}, {s}, {x},
      [x](const detail::TensorImpl& out) {
        auto gx = detail::input_grad(x);
        for (double& g : gx) g += out.grad[0];
      },
      "sum");
}

inline Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.numel());
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result(
      {}, {s / n}, {x},
      [x, n](const detail::TensorImpl& out) {
        auto gx = detail::input_grad(x);
        for (double& g : gx) g += out.grad[0] / n;
      },
      "mean");
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  require<DimensionError>(a.shape() == b.shape(), "add: shapes ", shape_str(a.shape()), " and ",
                          shape_str(b.shape()));
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] + b.data()[i];
  return make_result(
      a.shape(), std::move(y), {a, b},
      [a, b](const detail::TensorImpl& out) {
        for (const Tensor* t : {&a, &b})
          if (auto g = detail::input_grad(*t); !g.empty())
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i];
      },
      "add");
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  require<DimensionError>(a.shape() == b.shape(), "mul: shapes ", shape_str(a.shape()), " and ",
                          shape_str(b.shape()));
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] * b.data()[i];
  return make_result(
      a.shape(), std::move(y), {a, b},
      [a, b](const detail::TensorImpl& out) {
        if (auto g = detail::input_grad(a); !g.empty())
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * b.data()[i];
        if (auto g = detail::input_grad(b); !g.empty())
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * a.data()[i];
      },
      "mul");
}

inline Tensor scale(const Tensor& x, double factor) {
  std::vector<double> y(x.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.data()[i] * factor;
  return make_result(
      x.shape(), std::move(y), {x},
      [x, factor](const detail::TensorImpl& out) {
        auto gx = detail::input_grad(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += out.grad[i] * factor;
      },
      "scale");
}

// ---------------------------------------------------------------------------
// Point-set specific plumbing
// ---------------------------------------------------------------------------

/// grouped[..., S, C] - centers[..., C], the center broadcast over S.
inline Tensor subtract_center(const Tensor& grouped, const Tensor& centers) {
  require<DimensionError>(grouped.rank() >= 2 && centers.rank() + 1 == grouped.rank(),
                          "subtract_center: grouped ", shape_str(grouped.shape()), " centers ",
                          shape_str(centers.shape()));
  Shape expect = grouped.shape();
  const std::size_t group = expect[expect.size() - 2];
  expect.erase(expect.end() - 2);
  require<DimensionError>(expect == centers.shape(), "subtract_center: grouped ",
                          shape_str(grouped.shape()), " centers ", shape_str(centers.shape()));
  const std::size_t channels = grouped.shape().back();
  const std::size_t regions = centers.numel() / channels;
  const auto gs = grouped.data();
  const auto cs = centers.data();
  std::vector<double> y(gs.size());
  for (std::size_t r = 0; r < regions; ++r)
    for (std::size_t s = 0; s < group; ++s)
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t i = (r * group + s) * channels + c;
        y[i] = gs[i] - cs[r * channels + c];
      }
  return make_result(
      grouped.shape(), std::move(y), {grouped, centers},
      [grouped, centers, regions, group, channels](const detail::TensorImpl& out) {
        auto gg = detail::input_grad(grouped);
        auto gc = detail::input_grad(centers);
        for (std::size_t r = 0; r < regions; ++r)
          for (std::size_t s = 0; s < group; ++s)
            for (std::size_t c = 0; c < channels; ++c) {
              const std::size_t i = (r * group + s) * channels + c;
              if (!gg.empty()) gg[i] += out.grad[i];
              if (!gc.empty()) gc[r * channels + c] -= out.grad[i];
            }
      },
      "subtract_center");
}

/// x[B,F] repeated along a new axis: [B,count,F].
inline Tensor broadcast_rows(const Tensor& x, std::size_t count) {
  require<DimensionError>(x.rank() == 2, "broadcast_rows: expected [B,F], got ",
                          shape_str(x.shape()));
  const std::size_t batch = x.dim(0);
  const std::size_t width = x.dim(1);
  std::vector<double> y(batch * count * width);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t n = 0; n < count; ++n)
      std::copy_n(x.data().data() + b * width, width, y.data() + (b * count + n) * width);
  return make_result(
      {batch, count, width}, std::move(y), {x},
      [x, batch, count, width](const detail::TensorImpl& out) {
        auto gx = detail::input_grad(x);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t n = 0; n < count; ++n)
            for (std::size_t f = 0; f < width; ++f)
              gx[b * width + f] += out.grad[(b * count + n) * width + f];
      },
      "broadcast_rows");
}

/// out[b,n,:] = sum_j weights[b,n,j] * feats[b, index[b,n,j], :].
/// Indices and weights are constants of the forward pass.
inline Tensor weighted_gather(const Tensor& feats, std::span<const std::size_t> index,
                              std::span<const double> weights, std::size_t count,
                              std::size_t neighbors) {
  require<DimensionError>(feats.rank() == 3, "weighted_gather: expected [B,M,F], got ",
                          shape_str(feats.shape()));
  const std::size_t batch = feats.dim(0);
  const std::size_t rows = feats.dim(1);
  const std::size_t width = feats.dim(2);
  require<DimensionError>(index.size() == batch * count * neighbors &&
                              weights.size() == index.size(),
                          "weighted_gather: index/weight sizes do not match");
  std::vector<std::size_t> idx(index.begin(), index.end());
  std::vector<double> w(weights.begin(), weights.end());
  for (std::size_t i : idx)
    require<DimensionError>(i < rows, "weighted_gather: index ", i, " out of range ", rows);
  std::vector<double> y(batch * count * width, 0.0);
  const auto fs = feats.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t n = 0; n < count; ++n) {
      double* dst = y.data() + (b * count + n) * width;
      for (std::size_t j = 0; j < neighbors; ++j) {
        const std::size_t k = (b * count + n) * neighbors + j;
        const double* src = fs.data() + (b * rows + idx[k]) * width;
        for (std::size_t f = 0; f < width; ++f) dst[f] += w[k] * src[f];
      }
    }
  return make_result(
      {batch, count, width}, std::move(y), {feats},
      [feats, idx = std::move(idx), w = std::move(w), batch, rows, count, neighbors,
       width](const detail::TensorImpl& out) {
        auto gf = detail::input_grad(feats);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t n = 0; n < count; ++n)
            for (std::size_t j = 0; j < neighbors; ++j) {
              const std::size_t k = (b * count + n) * neighbors + j;
              double* dst = gf.data() + (b * rows + idx[k]) * width;
              const double* src = out.grad.data() + (b * count + n) * width;
              for (std::size_t f = 0; f < width; ++f) dst[f] += w[k] * src[f];
            }
      },
      "weighted_gather");
}

/// Inverted dropout; identity outside training or when p == 0.
inline Tensor dropout(const Tensor& x, double p, Rng& rng, Mode mode) {
  require<ConfigError>(p >= 0.0 && p < 1.0, "dropout: probability ", p, " not in [0,1)");
  if (mode == Mode::eval || p == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  const double factor = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  for (double& m : mask) m = keep(rng) ? factor : 0.0;
  std::vector<double> y(x.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.data()[i] * mask[i];
  return make_result(
      x.shape(), std::move(y), {x},
      [x, mask = std::move(mask)](const detail::TensorImpl& out) {
        auto gx = detail::input_grad(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += out.grad[i] * mask[i];
      },
      "dropout");
}

// ---------------------------------------------------------------------------
// Classification loss
// ---------------------------------------------------------------------------

/// Mean over rows of -log softmax(logits)[label]. Logits are [R, C].
inline Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require<DimensionError>(logits.rank() == 2, "softmax_cross_entropy: expected [B,C], got ",
                          shape_str(logits.shape()));
  const std::size_t rows = logits.dim(0);
  const std::size_t classes = logits.dim(1);
  require<DimensionError>(labels.size() == rows, "softmax_cross_entropy: ", labels.size(),
                          " labels for ", rows, " rows");
  require<DimensionError>(rows > 0 && classes > 0, "softmax_cross_entropy: empty logits");
  const auto zs = logits.data();
  std::vector<double> probs(zs.size());
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int label = labels[r];
    require(label >= 0 && static_cast<std::size_t>(label) < classes, "softmax_cross_entropy: label ",
            label, " outside [0,", classes, ")");
    const double* z = zs.data() + r * classes;
    const double zmax = *std::max_element(z, z + classes);
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) denom += std::exp(z[c] - zmax);
    for (std::size_t c = 0; c < classes; ++c) probs[r * classes + c] = std::exp(z[c] - zmax) / denom;
    total += -(z[label] - zmax - std::log(denom));
  }
  std::vector<int> lbl(labels.begin(), labels.end());
  return make_result(
      {}, {total / static_cast<double>(rows)}, {logits},
      [logits, probs = std::move(probs), lbl = std::move(lbl), rows,
       classes](const detail::TensorImpl& out) {
        auto g = detail::input_grad(logits);
        const double s = out.grad[0] / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < classes; ++c) {
            const double onehot = static_cast<std::size_t>(lbl[r]) == c ? 1.0 : 0.0;
            g[r * classes + c] += s * (probs[r * classes + c] - onehot);
          }
      },
      "softmax_cross_entropy");
}

}  // namespace sknet
