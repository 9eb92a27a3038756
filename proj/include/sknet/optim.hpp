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

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "sknet/layers.hpp"

namespace sknet {

/// Staircase exponential decay: initial_lr * decay_rate^floor(step / decay_steps).
inline double lr_schedule(double initial_lr, std::size_t step, double decay_rate, std::size_t decay_steps) {
  require<ConfigError>(decay_steps >= 1, "lr_schedule: decay_steps must be >= 1");
  return initial_lr * std::pow(decay_rate, static_cast<double>(step / decay_steps));
}

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over a fixed, ordered list of parameters.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<NamedTensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_) {
      m_.emplace_back(p.tensor.numel(), 0.0);
      v_.emplace_back(p.tensor.numel(), 0.0);
    }
  }

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  std::size_t step_count() const { return t_; }
  const std::vector<NamedTensor>& params() const { return params_; }
  const std::vector<double>& first_moment(std::size_t i) const { return m_[i]; }
  const std::vector<double>& second_moment(std::size_t i) const { return v_[i]; }

  void step() {
    for (const auto& p : params_)
      require(p.tensor.has_grad(), "adam_step: parameter '", p.name, "' has no gradient");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor w = params_[i].tensor;
      const auto g = w.grad();
      auto data = w.data_mut();
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t k = 0; k < data.size(); ++k) {
        m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
        v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
        data[k] -= cfg_.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg_.eps);
      }
    }
  }

 private:
  std::vector<NamedTensor> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace sknet
