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

#include <cstddef>
#include <vector>

#include "sknet/config.hpp"
#include "sknet/ops.hpp"

namespace sknet {

// Both regulating losses compare squared distances against their threshold
// and are averaged over the batch. At the hinge boundary the subgradient is 0.

/// Mean over the batch of (1/M^2) * sum over ordered pairs i != j of
/// max(0, delta - |sk_i - sk_j|^2). Skeypoints are [B, M, 3].
inline Tensor separation_loss(const Tensor& skeypoints, double delta) {
  require<DimensionError>(skeypoints.rank() == 3 && skeypoints.dim(2) == 3,
                          "separation_loss: expected [B,M,3], got ", shape_str(skeypoints.shape()));
  const std::size_t batch = skeypoints.dim(0);
  const std::size_t m = skeypoints.dim(1);
  require(m >= 2, "separation_loss: needs at least 2 Skeypoints, got ", m);
  const auto sk = skeypoints.data();
  const double norm = 1.0 / (static_cast<double>(batch) * static_cast<double>(m * m));
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* p = sk.data() + b * m * 3;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        if (i == j) continue;
        const double d2 = geometry::squared_distance(p + 3 * i, p + 3 * j);
        if (delta - d2 > 0.0) total += delta - d2;
      }
  }
  return make_result(
      {}, {total * norm}, {skeypoints},
      [skeypoints, delta, batch, m, norm](const detail::TensorImpl& out) {
        auto g = detail::input_grad(skeypoints);
        const auto sk = skeypoints.data();
        const double s = out.grad[0] * norm;
        for (std::size_t b = 0; b < batch; ++b) {
          const double* p = sk.data() + b * m * 3;
          double* gp = g.data() + b * m * 3;
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) {
              if (i == j) continue;
              const double d2 = geometry::squared_distance(p + 3 * i, p + 3 * j);
              if (!(delta - d2 > 0.0)) continue;
              // d/dsk_i of (delta - |sk_i - sk_j|^2) = -2 (sk_i - sk_j)
              for (std::size_t k = 0; k < 3; ++k) {
                const double diff = p[3 * i + k] - p[3 * j + k];
                gp[3 * i + k] -= 2.0 * s * diff;
                gp[3 * j + k] += 2.0 * s * diff;
              }
            }
        }
      },
      "separation_loss");
}

/// Mean over the batch of (1/(M*H)) * sum of max(0, |sk_i - cp_h|^2 - theta)
/// over each Skeypoint's captured points. Captured points are [B, M, H, 3]
/// raw coordinates; only the Skeypoints receive gradient.
inline Tensor close_loss(const Tensor& skeypoints, const Tensor& captured, double theta) {
  require<DimensionError>(skeypoints.rank() == 3 && skeypoints.dim(2) == 3 && captured.rank() == 4 &&
                              captured.dim(0) == skeypoints.dim(0) &&
                              captured.dim(1) == skeypoints.dim(1) && captured.dim(3) == 3,
                          "close_loss: Skeypoints ", shape_str(skeypoints.shape()),
                          " do not align with captured points ", shape_str(captured.shape()));
  const std::size_t batch = skeypoints.dim(0);
  const std::size_t m = skeypoints.dim(1);
  const std::size_t h = captured.dim(2);
  require<DimensionError>(m >= 1 && h >= 1, "close_loss: empty regions");
  const auto sk = skeypoints.data();
  const auto cp = captured.data();
  const double norm = 1.0 / (static_cast<double>(batch) * static_cast<double>(m * h));
  double total = 0.0;
  for (std::size_t r = 0; r < batch * m; ++r)
    for (std::size_t k = 0; k < h; ++k) {
      const double d2 = geometry::squared_distance(sk.data() + 3 * r, cp.data() + 3 * (r * h + k));
      if (d2 - theta > 0.0) total += d2 - theta;
    }
  return make_result(
      {}, {total * norm}, {skeypoints},
      [skeypoints, captured, theta, batch, m, h, norm](const detail::TensorImpl& out) {
        auto g = detail::input_grad(skeypoints);
        const auto sk = skeypoints.data();
        const auto cp = captured.data();
        const double s = out.grad[0] * norm;
        for (std::size_t r = 0; r < batch * m; ++r)
          for (std::size_t k = 0; k < h; ++k) {
            const double* c = cp.data() + 3 * (r * h + k);
            const double d2 = geometry::squared_distance(sk.data() + 3 * r, c);
            if (!(d2 - theta > 0.0)) continue;
            for (std::size_t a = 0; a < 3; ++a) g[3 * r + a] += 2.0 * s * (sk[3 * r + a] - c[a]);
          }
      },
      "close_loss");
}

struct LossTerms {
  Tensor total;
  Tensor task;
  Tensor separation;
  Tensor close;
};

/// weight_task * task + weight_sep * L_sep + weight_close * L_close.
inline Tensor total_loss(const Tensor& task, const Tensor& sep, const Tensor& close,
                         const LossConfig& cfg) {
  return add(add(scale(task, cfg.weight_task), scale(sep, cfg.weight_sep)),
             scale(close, cfg.weight_close));
}

}  // namespace sknet
