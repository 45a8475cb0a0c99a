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

// Differentiable tensor primitives recorded on a Tape.

#ifndef PFNET_OPS_HPP_
#define PFNET_OPS_HPP_

#include <span>
#include <vector>

#include "pfnet/autodiff.hpp"

namespace pfnet {

enum class UnaryKind { kRelu, kSigmoid, kExp, kNeg };
enum class BinaryKind { kAdd, kSub, kMul };

template <typename T>
Var<T> unary(UnaryKind kind, const Var<T>& x);

template <typename T>
Var<T> relu(const Var<T>& x) { return unary(UnaryKind::kRelu, x); }
template <typename T>
Var<T> sigmoid(const Var<T>& x) { return unary(UnaryKind::kSigmoid, x); }
template <typename T>
Var<T> exponential(const Var<T>& x) { return unary(UnaryKind::kExp, x); }
template <typename T>
Var<T> negate(const Var<T>& x) { return unary(UnaryKind::kNeg, x); }

/// Elementwise a (op) b. `b` may equal a's shape, be per-channel [1,C,1,1],
/// or be a single-channel map [N,1,H,W] broadcast over a's channels.
template <typename T>
Var<T> binary(BinaryKind kind, const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) { return binary(BinaryKind::kAdd, a, b); }
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) { return binary(BinaryKind::kSub, a, b); }
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) { return binary(BinaryKind::kMul, a, b); }

template <typename T>
Var<T> scale(const Var<T>& x, T factor);

/// [m,k] x [k,n] -> [m,n], ascending-k summation.
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> transpose(const Var<T>& a);

/// Row-wise softmax of a matrix, max-subtracted.
template <typename T>
Var<T> softmax_rows(const Var<T>& x);

/// Stacks [N,Ci,H,W] inputs along channels in argument order.
template <typename T>
Var<T> concat_channels(std::span<const Var<T>> xs);

template <typename T>
Var<T> concat_channels(std::initializer_list<Var<T>> xs) {
  return concat_channels(std::span<const Var<T>>(xs.begin(), xs.size()));
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape);

/// Scalar [1] sum, ascending index order.
template <typename T>
Var<T> sum(const Var<T>& x);

template <typename T>
Var<T> mean(const Var<T>& x);

/// Sum of a list of same-shape values, in list order.
template <typename T>
Var<T> add_n(std::span<const Var<T>> xs);

}  // namespace pfnet

#endif  // PFNET_OPS_HPP_
