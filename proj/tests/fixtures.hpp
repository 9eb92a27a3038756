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

#include <vector>

#include "sknet/model.hpp"
#include "support.hpp"

namespace sknet::testing {

/// A model small enough for exhaustive checks.
inline ModelConfig tiny_config(Task task = Task::classification) {
  ModelConfig c;
  c.n_points = 32;
  c.n_skeypoints = 8;
  c.detail_k = 4;
  c.pattern_k = 3;
  c.point_mlp_widths = {8, 16};
  c.skeypoint_fc_widths = {16};
  c.detail_mlp_widths = {8};
  c.pattern_mlp_widths = {8};
  c.pd_fc_widths = {16};
  c.head_widths = {16};
  c.n_classes = task == Task::classification ? 4 : 5;
  c.task = task;
  return c;
}

inline Tensor cloud_batch(Gen& g, std::size_t batch, std::size_t n, std::size_t channels = 3) {
  return Tensor::from_data({batch, n, channels}, uniform_values(g, batch * n * channels));
}

/// Runs a few train-mode passes so that every batch-norm layer has running
/// statistics and eval mode becomes available.
inline void warm_up(SkNet& model, Gen& g, std::size_t batch = 4) {
  NoGradGuard no_grad;
  Rng rng(g());
  for (int i = 0; i < 3; ++i) {
    ForwardOptions opts;
    opts.rng = &rng;
    model.forward(cloud_batch(g, batch, model.config().n_points, model.config().input_channels()), Mode::train,
                  opts);
  }
}

/// Point rows of a [B,N,C] cloud reordered by `perm` in every batch item.
inline Tensor permute_points(const Tensor& coords, const std::vector<std::size_t>& perm) {
  const std::size_t b = coords.dim(0), n = coords.dim(1), c = coords.dim(2);
  std::vector<double> out(coords.numel());
  const auto src = coords.data();
  for (std::size_t k = 0; k < b; ++k)
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(src.data() + (k * n + perm[i]) * c, c, out.data() + (k * n + i) * c);
  return Tensor::from_data(coords.shape(), std::move(out));
}

inline std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace sknet::testing
