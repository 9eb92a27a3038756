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
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sknet/ops.hpp"

namespace sknet {

enum class Activation { none, relu, prelu };

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct NamedBatchNorm {
  std::string name;
  BatchNormState* state;
};

struct LayerSpec {
  std::size_t width;
  bool batch_norm;
  Activation activation;
};

/// Linear -> optional batch norm -> activation, shared over every leading axis.
class DenseLayer {
 public:
  DenseLayer(std::size_t in, const LayerSpec& spec, Rng& rng) : spec_(spec) {
    // He-normal init keeps activations O(1) through the rectifier stacks.
    std::normal_distribution<double> gauss(0.0, std::sqrt(2.0 / static_cast<double>(in)));
    std::vector<double> w(in * spec.width);
    for (double& v : w) v = gauss(rng);
    weight_ = Tensor::from_data({in, spec.width}, std::move(w), true);
    bias_ = Tensor::zeros({spec.width}, true);
    if (spec.batch_norm) {
      gamma_ = Tensor::full({spec.width}, 1.0, true);
      beta_ = Tensor::zeros({spec.width}, true);
    }
    if (spec.activation == Activation::prelu) slope_ = Tensor::full({spec.width}, 0.25, true);
  }

  Tensor forward(const Tensor& x, Mode mode) {
    Tensor y = linear(x, weight_, bias_);
    if (spec_.batch_norm) y = batch_norm(y, gamma_, beta_, bn_, mode);
    switch (spec_.activation) {
      case Activation::relu: return relu(y);
      case Activation::prelu: return prelu(y, slope_);
      case Activation::none: return y;
    }
    return y;
  }

  std::size_t width() const { return spec_.width; }
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }

  void collect(const std::string& prefix, std::vector<NamedTensor>& params,
               std::vector<NamedBatchNorm>& buffers) {
    params.push_back({prefix + ".weight", weight_});
    params.push_back({prefix + ".bias", bias_});
    if (spec_.batch_norm) {
      params.push_back({prefix + ".bn.gamma", gamma_});
      params.push_back({prefix + ".bn.beta", beta_});
      buffers.push_back({prefix + ".bn", &bn_});
    }
    if (spec_.activation == Activation::prelu) params.push_back({prefix + ".prelu", slope_});
  }

 private:
  LayerSpec spec_;
  Tensor weight_, bias_, gamma_, beta_, slope_;
  BatchNormState bn_;
};

/// A chain of dense layers. An optional dropout precedes the final layer.
class DenseStack {
 public:
  DenseStack() = default;
  DenseStack(std::size_t in, const std::vector<LayerSpec>& specs, Rng& rng, double dropout_before_last = 0.0)
      : dropout_(dropout_before_last) {
    std::size_t width = in;
    for (const auto& s : specs) {
      layers_.emplace_back(width, s, rng);
      width = s.width;
    }
  }

  /// Uniform hidden layers of the given widths.
  static std::vector<LayerSpec> uniform(const std::vector<std::size_t>& widths, Activation act) {
    std::vector<LayerSpec> specs;
    for (auto w : widths) specs.push_back({w, true, act});
    return specs;
  }

  Tensor forward(const Tensor& x, Mode mode, Rng* rng = nullptr, std::vector<Tensor>* taps = nullptr) {
    Tensor y = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (i + 1 == layers_.size() && dropout_ > 0.0 && mode == Mode::train) {
        require(rng != nullptr, "dropout in train mode needs an rng");
        y = dropout(y, dropout_, *rng, mode);
      }
      y = layers_[i].forward(y, mode);
      if (taps) taps->push_back(y);
    }
    return y;
  }

  std::size_t out_width() const { return layers_.back().width(); }
  std::size_t size() const { return layers_.size(); }
  bool empty() const { return layers_.empty(); }
  DenseLayer& layer(std::size_t i) { return layers_[i]; }

  void collect(const std::string& prefix, std::vector<NamedTensor>& params,
               std::vector<NamedBatchNorm>& buffers) {
    for (std::size_t i = 0; i < layers_.size(); ++i)
      layers_[i].collect(prefix + "." + std::to_string(i), params, buffers);
  }

 private:
  std::vector<DenseLayer> layers_;
  double dropout_ = 0.0;
};

}  // namespace sknet
