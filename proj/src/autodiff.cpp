/* Copyright 2026 The PFNet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "pfnet/autodiff.hpp"

#include <algorithm>

namespace pfnet {

template <typename T>
Tensor<T> Gradients<T>::of(const Var<T>& leaf) const {
  const std::size_t id = leaf.id();
  if (id < grads_.size() && !grads_[id].empty()) return Tensor<T>(shapes_[id], grads_[id]);
  return Tensor<T>::zeros(leaf.shape());
}

template <typename T>
bool Gradients<T>::reached(const Var<T>& leaf) const {
  return leaf.id() < grads_.size() && !grads_[leaf.id()].empty();
}

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value, bool requires_grad) {
  if (consumed_) throw ShapeError("tape already consumed by a backward pass");
  if (!value.all_finite()) throw NumericError("non-finite value in leaf tensor");
  nodes_.push_back(Node{"leaf", std::move(value), requires_grad, true, {}});
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(std::string_view op, Tensor<T> value, std::span<const Var<T>> inputs,
                       Adjoint adjoint) {
  if (consumed_) throw ShapeError("tape already consumed by a backward pass");
  if (!value.all_finite()) {
    throw NumericError("non-finite output from '" + std::string(op) + "' with shape " +
                       shape_str(value.shape()));
  }
  bool needs = false;
  for (const Var<T>& in : inputs) {
    if (in.tape() != this) throw ShapeError("operand of '" + std::string(op) + "' is on another tape");
    needs = needs || nodes_[in.id()].needs_grad;
  }
  nodes_.push_back(Node{std::string(op), std::move(value), needs, false,
                        needs ? std::move(adjoint) : Adjoint{}});
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
std::span<T> Tape<T>::grad_buffer(const Var<T>& target) {
  const std::size_t id = target.id();
  if (!nodes_.at(id).needs_grad) return {};
  auto& g = grads_.at(id);
  if (g.empty()) g.assign(nodes_[id].value.numel(), T(0));
  return {g.data(), g.size()};
}

template <typename T>
void Tape<T>::accumulate(const Var<T>& target, std::span<const T> grad) {
  std::span<T> g = grad_buffer(target);
  if (g.empty()) return;
  if (grad.size() != g.size()) {
    throw ShapeError("gradient size mismatch for '" + nodes_[target.id()].op + "'");
  }
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += grad[i];
}

template <typename T>
Gradients<T> Tape<T>::backward(const Var<T>& loss) {
  if (consumed_) throw ShapeError("tape already consumed by a backward pass");
  if (loss.tape() != this) throw ShapeError("loss is not recorded on this tape");
  if (loss.value().numel() != 1) {
    throw ShapeError("backward requires a scalar loss, got " + shape_str(loss.shape()));
  }
  consumed_ = true;
  grads_.assign(nodes_.size(), {});
  if (nodes_[loss.id()].needs_grad) grads_[loss.id()].assign(1, T(1));

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.is_leaf || !node.adjoint || grads_[i].empty()) continue;
    node.adjoint(std::span<const T>(grads_[i].data(), grads_[i].size()), *this);
    for (T g : grads_[i]) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient flowing out of '" + node.op + "'");
    }
    // Interior gradients are not needed once propagated.
    std::vector<T>().swap(grads_[i]);
    node.adjoint = nullptr;
  }

  Gradients<T> out;
  out.shapes_.resize(nodes_.size());
  out.grads_.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].is_leaf && nodes_[i].needs_grad && !grads_[i].empty()) {
      out.shapes_[i] = nodes_[i].value.shape();
      out.grads_[i] = std::move(grads_[i]);
    }
  }
  grads_.clear();
  return out;
}

template class Gradients<float>;
template class Gradients<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace pfnet
