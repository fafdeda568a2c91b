// Copyright (c) 2026 The polynet authors.
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
#include <functional>
#include <memory>
#include <unordered_map>
#include <utility>
#include <vector>

#include "polynet/common.hpp"

namespace polynet {

class Tensor;

namespace detail {

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

/// Backward callback of one recorded op. `upstream` is dL/d(self);
/// contributions are accumulated into `parent_grads[i]` (null when that
/// parent does not need a gradient).
using BackwardFn = std::function<void(const std::vector<Real>& upstream,
                                      const TensorNode& self,
                                      const std::vector<std::vector<Real>*>& parent_grads)>;

struct TensorNode {
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;  // persistent accumulator, leaves only
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  BackwardFn backward;

  bool is_leaf() const { return backward == nullptr; }
  bool needs_grad() const { return requires_grad || backward != nullptr; }
};

inline bool& grad_enabled_flag() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

/// Disables graph recording for its scope (inference / oracle evaluations).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_enabled_flag()) { detail::grad_enabled_flag() = false; }
  ~NoGradGuard() { detail::grad_enabled_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

/// Dense N-dimensional array with an optional gradient slot. Value-like
/// handle: copies share the underlying node.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, Real fill = 0.0)
      : node_(std::make_shared<detail::TensorNode>()) {
    validate_shape(shape);
    node_->shape = std::move(shape);
    node_->value.assign(static_cast<std::size_t>(numel(node_->shape)), fill);
  }

  Tensor(Shape shape, std::vector<Real> values)
      : node_(std::make_shared<detail::TensorNode>()) {
    validate_shape(shape);
    if (numel(shape) != static_cast<std::int64_t>(values.size()))
      throw DimensionError("tensor shape " + shape_str(shape) + " does not match value count " +
                           std::to_string(values.size()));
    node_->shape = std::move(shape);
    node_->value = std::move(values);
  }

  static Tensor scalar(Real v) { return Tensor(Shape{1}, std::vector<Real>{v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(node_->value.size()); }

  const std::vector<Real>& values() const { return node_->value; }
  /// Direct write access to the buffer; meant for leaves (parameter updates,
  /// dataset construction).
  std::vector<Real>& mutable_values() { return node_->value; }

  Real operator[](std::int64_t i) const { return node_->value[static_cast<std::size_t>(i)]; }
  Real item() const {
    if (size() != 1) throw UsageError("item() on tensor of size " + std::to_string(size()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    node_->requires_grad = b;
    return *this;
  }
  bool is_leaf() const { return node_->is_leaf(); }

  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<Real>& grad() const {
    if (node_->grad.empty())
      throw UsageError("gradient requested but never populated; call backward() first");
    return node_->grad;
  }
  std::vector<Real>& mutable_grad() {
    if (node_->grad.empty())
      throw UsageError("gradient requested but never populated; call backward() first");
    return node_->grad;
  }
  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.assign(node_->grad.size(), 0.0);
  }

  /// Value copy detached from any recorded graph.
  Tensor detach() const { return Tensor(node_->shape, node_->value); }

  detail::NodePtr node() const { return node_; }

 private:
  static void validate_shape(const Shape& shape) {
    for (int e : shape)
      if (e <= 0) throw DimensionError("non-positive extent in shape " + shape_str(shape));
  }

  detail::NodePtr node_;
};

namespace detail {

inline void check_finite(const std::vector<Real>& v, const char* op) {
  for (Real x : v)
    if (!std::isfinite(x))
      throw NumericError(std::string("non-finite value produced by ") + op);
}

/// Assembles an op result: finiteness check plus graph recording when any
/// input carries gradient and recording is enabled.
inline Tensor make_op(const char* op, Shape out_shape, std::vector<Real> out_values,
                      std::vector<Tensor> inputs, BackwardFn backward) {
  check_finite(out_values, op);
  Tensor out(std::move(out_shape), std::move(out_values));
  if (grad_enabled_flag()) {
    bool any = false;
    for (const Tensor& t : inputs)
      if (t.node()->needs_grad()) any = true;
    if (any) {
      auto node = out.node();
      node->parents.reserve(inputs.size());
      for (const Tensor& t : inputs) node->parents.push_back(t.node());
      node->backward = std::move(backward);
    }
  }
  return out;
}

}  // namespace detail

/// Reverse-mode sweep from a scalar loss. Gradients of leaf tensors with
/// requires_grad are accumulated (+=); repeated calls therefore sum.
inline void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw UsageError("backward() requires a scalar loss, got shape " +
                     shape_str(loss.shape()));
  using detail::TensorNode;
  TensorNode* root = loss.node().get();

  // Iterative post-order DFS for a topological order.
  std::vector<TensorNode*> topo;
  std::unordered_map<TensorNode*, int> state;  // 0 unseen, 1 open, 2 done
  std::vector<TensorNode*> stack{root};
  while (!stack.empty()) {
    TensorNode* n = stack.back();
    int& st = state[n];
    if (st == 0) {
      st = 1;
      for (const auto& p : n->parents)
        if (p->needs_grad() && state[p.get()] == 0) stack.push_back(p.get());
    } else {
      stack.pop_back();
      if (st == 1) {
        st = 2;
        topo.push_back(n);
      }
    }
  }

  // Scratch buffers live for this sweep only, so a second sweep over the
  // same graph starts clean and leaf accumulators keep summing.
  std::unordered_map<TensorNode*, std::vector<Real>> scratch;
  scratch[root] = {1.0};

  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    TensorNode* n = *it;
    if (!n->backward) continue;
    auto found = scratch.find(n);
    if (found == scratch.end()) continue;  // unreachable from the loss
    std::vector<std::vector<Real>*> parent_bufs(n->parents.size(), nullptr);
    for (std::size_t i = 0; i < n->parents.size(); ++i) {
      TensorNode* p = n->parents[i].get();
      if (!p->needs_grad()) continue;
      auto& buf = scratch[p];
      if (buf.empty()) buf.assign(p->value.size(), 0.0);
      parent_bufs[i] = &buf;
    }
    n->backward(found->second, *n, parent_bufs);
  }

  for (TensorNode* n : topo) {
    if (!n->requires_grad) continue;
    auto found = scratch.find(n);
    if (found == scratch.end()) continue;
    if (n->grad.empty()) n->grad.assign(n->value.size(), 0.0);
    for (std::size_t i = 0; i < n->grad.size(); ++i) n->grad[i] += found->second[i];
  }
}

/// Named trainable tensor. Every parameter of a network appears exactly once
/// in its registry.
struct Parameter {
  std::string name;
  Tensor tensor;
};

}  // namespace polynet
