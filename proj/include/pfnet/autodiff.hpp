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

#ifndef PFNET_AUTODIFF_HPP_
#define PFNET_AUTODIFF_HPP_

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pfnet/tensor.hpp"

namespace pfnet {

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape.
template <typename T>
class Var {
 public:
  Var() = default;

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t i) const { return value().dim(i); }
  std::size_t id() const { return id_; }
  Tape<T>* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradients produced by one reverse pass, keyed by leaf.
template <typename T>
class Gradients {
 public:
  /// Gradient of the loss w.r.t. `leaf`; zeros if the leaf was not reached.
  Tensor<T> of(const Var<T>& leaf) const;
  bool reached(const Var<T>& leaf) const;

 private:
  friend class Tape<T>;
  std::vector<Shape> shapes_;
  std::vector<std::vector<T>> grads_;
};

/// The computation record: nodes in execution order, each with an adjoint
/// rule. Confined to one thread.
template <typename T>
class Tape {
 public:
  /// Adjoint rule: receives the upstream gradient of the node's output and
  /// accumulates into its inputs through Tape::accumulate / grad_buffer.
  using Adjoint = std::function<void(std::span<const T> upstream, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(Tensor<T> value, bool requires_grad = true);
  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  /// Records an op result. Throws NumericError if `value` holds NaN/Inf.
  Var<T> record(std::string_view op, Tensor<T> value, std::span<const Var<T>> inputs,
                Adjoint adjoint);
  Var<T> record(std::string_view op, Tensor<T> value, std::initializer_list<Var<T>> inputs,
                Adjoint adjoint) {
    return record(op, std::move(value), std::span<const Var<T>>(inputs.begin(), inputs.size()),
                  std::move(adjoint));
  }

  bool needs_grad(const Var<T>& v) const { return nodes_.at(v.id_).needs_grad; }

  /// Adds `grad` into the gradient buffer of `target`. No-op when the
  /// target does not lead to a leaf requiring gradients.
  void accumulate(const Var<T>& target, std::span<const T> grad);

  /// Mutable gradient buffer of `target` for scatter-style accumulation, or an
  /// empty span when the target needs no gradient.
  std::span<T> grad_buffer(const Var<T>& target);

  /// Replays adjoints in reverse execution order. Each tape supports one pass.
  Gradients<T> backward(const Var<T>& loss);

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  const std::string& op_name(std::size_t id) const { return nodes_.at(id).op; }
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

 private:
  struct Node {
    std::string op;
    Tensor<T> value;
    bool needs_grad = false;
    bool is_leaf = false;
    Adjoint adjoint;
  };

  std::vector<Node> nodes_;
  std::vector<std::vector<T>> grads_;
  bool consumed_ = false;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  if (tape_ == nullptr) throw ShapeError("use of an unbound variable");
  return tape_->value(id_);
}

}  // namespace pfnet

#endif  // PFNET_AUTODIFF_HPP_
