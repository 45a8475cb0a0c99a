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

#ifndef PFNET_TENSOR_HPP_
#define PFNET_TENSOR_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pfnet/errors.hpp"
#include "pfnet/random.hpp"

namespace pfnet {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

inline void check_dims(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimension must be >= 1, got " + shape_str(shape));
  }
}

/// Immutable dense row-major array. Copies share the underlying buffer.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : shape_{1}, data_(std::make_shared<const std::vector<T>>(1, T(0))) {}

  Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
    check_dims(shape_);
    data_ = std::make_shared<const std::vector<T>>(shape_numel(shape_), fill);
  }

  Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)) {
    check_dims(shape_);
    if (values.size() != shape_numel(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(shape_));
    }
    data_ = std::make_shared<const std::vector<T>>(std::move(values));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), T(1)); }

  /// Seeded uniform fill in [lo, hi). Identical (seed, shape) gives identical bytes.
  static Tensor uniform(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    check_dims(shape);
    Rng rng(seed);
    std::vector<T> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
    return Tensor(std::move(shape), std::move(v));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t numel() const { return data_->size(); }

  std::span<const T> values() const { return {data_->data(), data_->size()}; }
  const T* data() const { return data_->data(); }
  const T& operator[](std::size_t i) const { return (*data_)[i]; }

  /// Element of a rank-4 [N, C, H, W] tensor.
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return (*data_)[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  std::vector<T> to_vector() const { return *data_; }

  Tensor reshaped(Shape shape) const {
    check_dims(shape);
    if (shape_numel(shape) != numel()) {
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    Tensor out = *this;
    out.shape_ = std::move(shape);
    return out;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> v(numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<U>((*data_)[i]);
    return Tensor<U>(shape_, std::move(v));
  }

  bool all_finite() const {
    for (const T& x : *data_) {
      if (!std::isfinite(x)) return false;
    }
    return true;
  }

  bool bitwise_equal(const Tensor& other) const {
    return shape_ == other.shape_ &&
           std::memcmp(data_->data(), other.data_->data(), numel() * sizeof(T)) == 0;
  }

 private:
  Shape shape_;
  std::shared_ptr<const std::vector<T>> data_;
};

}  // namespace pfnet

#endif  // PFNET_TENSOR_HPP_
