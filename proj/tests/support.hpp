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
#include <functional>
#include <random>
#include <vector>

#include "sknet/ops.hpp"

namespace sknet::testing {

using Gen = std::mt19937_64;

inline std::vector<double> uniform_values(Gen& g, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(g);
  return v;
}

/// Uniform values in [-1, 1] whose magnitude is at least `gap`, so they stay
/// clear of a kink at zero under finite-difference probing.
inline std::vector<double> values_away_from_zero(Gen& g, std::size_t n, double gap = 1e-3) {
  std::uniform_real_distribution<double> u(gap, 1.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> v(n);
  for (double& x : v) x = sign(g) ? u(g) : -u(g);
  return v;
}

inline Tensor random_tensor(Gen& g, Shape shape, bool requires_grad = true, double lo = -1.0, double hi = 1.0) {
  const std::size_t n = shape_numel(shape);
  return Tensor::from_data(std::move(shape), uniform_values(g, n, lo, hi), requires_grad);
}

/// Random point cloud of n points in [-1, 1]^3.
inline std::vector<double> random_cloud(Gen& g, std::size_t n) { return uniform_values(g, 3 * n); }

inline std::vector<std::size_t> random_permutation(Gen& g, std::size_t n) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  std::shuffle(p.begin(), p.end(), g);
  return p;
}

/// ||a - b|| / max(||a||, ||b||, tiny).
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nb), 1e-300});
  return std::sqrt(diff) / scale;
}

enum class ErrorScope { per_tensor, joint };

/// Relative error between the backward-pass gradient of the scalar `f()` and
/// its central finite difference with step h. Per-tensor scope reports the
/// worst input; joint scope measures all inputs as one vector, which keeps
/// structurally-zero gradients (a bias feeding batch norm) from dominating.
inline double gradcheck(const std::function<Tensor()>& f, std::vector<Tensor> inputs, double h = 1e-6,
                        ErrorScope scope = ErrorScope::per_tensor) {
  for (auto& t : inputs) t.zero_grad();
  backward(f());
  double worst = 0.0;
  std::vector<double> all_analytic, all_numeric;
  for (auto& t : inputs) {
    const auto g = t.grad();
    std::vector<double> analytic(g.begin(), g.end());
    if (analytic.empty()) analytic.assign(t.numel(), 0.0);
    std::vector<double> numeric(t.numel());
    NoGradGuard no_grad;
    auto data = t.data_mut();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double keep = data[i];
      data[i] = keep + h;
      const double up = f().item();
      data[i] = keep - h;
      const double down = f().item();
      data[i] = keep;
      numeric[i] = (up - down) / (2.0 * h);
    }
    worst = std::max(worst, relative_error(analytic, numeric));
    all_analytic.insert(all_analytic.end(), analytic.begin(), analytic.end());
    all_numeric.insert(all_numeric.end(), numeric.begin(), numeric.end());
  }
  return scope == ErrorScope::per_tensor ? worst : relative_error(all_analytic, all_numeric);
}

/// Weighted sum of all elements with fixed random weights: a generic smooth
/// scalar head for checking ops with non-scalar output.
inline Tensor probe(const Tensor& y, std::uint64_t seed = 99) {
  Gen g(seed);
  const Tensor w = Tensor::from_data(y.shape(), uniform_values(g, y.numel()));
  return sum(mul(y, w));
}

}  // namespace sknet::testing
