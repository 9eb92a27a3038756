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
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sknet/error.hpp"

namespace sknet {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

class Tensor;

namespace detail {

struct TensorImpl;

/// One recorded operation: its inputs and the rule that pushes the output's
/// gradient back into them.
struct Node {
  std::vector<Tensor> inputs;
  std::function<void(const TensorImpl& out)> backward;
  const char* name = "";
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until populated
  bool requires_grad = false;
  std::shared_ptr<Node> grad_fn;
};

inline thread_local bool grad_mode_enabled = true;

}  // namespace detail

/// Shared handle to a dense row-major array of doubles with an optional
/// gradient slot. Copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    const std::size_t n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<double>(n, value), requires_grad);
  }

  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false) {
    require<DimensionError>(shape_numel(shape) == data.size(), "tensor shape ", shape_str(shape),
                            " does not match ", data.size(), " values");
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return from_data({}, {value}, requires_grad);
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const {
    require<DimensionError>(axis < rank(), "axis ", axis, " out of range for shape ",
                            shape_str(shape()));
    return impl_->shape[axis];
  }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  /// Direct write access; only for leaves (parameters, inputs), never for
  /// tensors already consumed by a recorded operation.
  std::span<double> data_mut() { return impl_->data; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  /// Gradient buffer, zero-filled on first access.
  std::span<double> grad_mut() const {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
    return impl_->grad;
  }
  void zero_grad() { impl_->grad.clear(); }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool flag) { impl_->requires_grad = flag; }
  bool is_leaf() const { return impl_->grad_fn == nullptr; }
  const char* op_name() const { return impl_->grad_fn ? impl_->grad_fn->name : "leaf"; }

  double item() const {
    require<DimensionError>(numel() == 1, "item() on tensor of shape ", shape_str(shape()));
    return impl_->data[0];
  }

  double at(std::initializer_list<std::size_t> index) const {
    require<DimensionError>(index.size() == rank(), "index rank mismatch");
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (std::size_t i : index) {
      require<DimensionError>(i < impl_->shape[axis], "index out of range");
      flat = flat * impl_->shape[axis] + i;
      ++axis;
    }
    return impl_->data[flat];
  }

  /// Copy of the values with no history.
  Tensor detach() const { return from_data(shape(), impl_->data, false); }

  detail::TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<detail::Node>& grad_fn() const { return impl_->grad_fn; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  friend Tensor make_result(Shape, std::vector<double>, std::vector<Tensor>,
                            std::function<void(const detail::TensorImpl&)>, const char*);

  std::shared_ptr<detail::TensorImpl> impl_;
};

inline bool grad_enabled() { return detail::grad_mode_enabled; }

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_enabled) { detail::grad_mode_enabled = false; }
  ~NoGradGuard() { detail::grad_mode_enabled = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

using BackwardFn = std::function<void(const detail::TensorImpl&)>;

/// Wraps freshly computed values as an operation output. The backward rule is
/// recorded only when grad mode is on and some input requires grad.
inline Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                          BackwardFn backward, const char* name) {
  Tensor out = Tensor::from_data(std::move(shape), std::move(data), false);
  if (!grad_enabled()) return out;
  bool any = false;
  for (const Tensor& t : inputs) any = any || (t.defined() && t.requires_grad());
  if (!any) return out;
  auto node = std::make_shared<detail::Node>();
  node->inputs = std::move(inputs);
  node->backward = std::move(backward);
  node->name = name;
  out.impl_->requires_grad = true;
  out.impl_->grad_fn = std::move(node);
  return out;
}

/// The recorded computation reachable from `root`, parents before children.
inline std::vector<Tensor> topological_order(const Tensor& root) {
  std::vector<Tensor> order;
  std::unordered_set<const detail::TensorImpl*> visited;
  // Iterative post-order DFS; deep MLP stacks would overflow a recursive walk.
  std::vector<std::pair<Tensor, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root.impl());
  while (!stack.empty()) {
    auto& [tensor, next] = stack.back();
    const auto& node = tensor.grad_fn();
    if (node && next < node->inputs.size()) {
      const Tensor child = node->inputs[next++];
      if (child.defined() && child.requires_grad() && visited.insert(child.impl()).second)
        stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(tensor);
    stack.pop_back();
  }
  return order;
}

/// Reverse-mode sweep from a scalar root. Intermediate gradients are reset on
/// every call; leaf gradients accumulate across calls until zero_grad().
inline void backward(const Tensor& root) {
  require<DimensionError>(root.defined() && root.numel() == 1,
                          "backward() needs a scalar root, got shape ",
                          root.defined() ? shape_str(root.shape()) : std::string("<undefined>"));
  require(root.requires_grad(), "backward() root does not require grad");
  const std::vector<Tensor> order = topological_order(root);
  for (const Tensor& t : order) {
    if (!t.is_leaf()) t.impl()->grad.assign(t.numel(), 0.0);
  }
  root.grad_mut()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const auto& node = it->grad_fn();
    if (node) node->backward(*it->impl());
  }
}

namespace detail {

/// Gradient buffer of an op input, or an empty span when it takes none.
inline std::span<double> input_grad(const Tensor& t) {
  if (!t.defined() || !t.requires_grad()) return {};
  return t.grad_mut();
}

}  // namespace detail

}  // namespace sknet
