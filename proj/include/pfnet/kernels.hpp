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

// Raw buffer kernels shared by the differentiable ops. Each hot kernel has an
// OpenMP-parallel implementation and a plain serial reference that the tests
// and the benchmark compare against.

#ifndef PFNET_KERNELS_HPP_
#define PFNET_KERNELS_HPP_

#include <cstddef>

namespace pfnet::kernels {

enum class Op { kNone, kTranspose };

/// C[m,n] = op(A)[m,k] * op(B)[k,n] (or += when `accumulate`). Row-major.
/// Every output element is summed in ascending k, so results do not depend
/// on the thread count or blocking.
template <typename T>
void gemm(Op op_a, Op op_b, std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b,
          T* c, bool accumulate = false);

/// Naive triple loop with the same ascending-k summation.
template <typename T>
void gemm_reference(Op op_a, Op op_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
                    const T* b, T* c, bool accumulate = false);

struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t kernel_h, kernel_w;
  std::size_t stride, padding;

  std::size_t out_h() const { return (height + 2 * padding - kernel_h) / stride + 1; }
  std::size_t out_w() const { return (width + 2 * padding - kernel_w) / stride + 1; }
  std::size_t col_rows() const { return channels * kernel_h * kernel_w; }
  std::size_t col_cols() const { return out_h() * out_w(); }
};

/// Unfolds one [C,H,W] image into [C*kh*kw, Ho*Wo] with zero padding.
template <typename T>
void im2col(const ConvGeometry& g, const T* image, T* col);

/// Folds columns back, accumulating into `image` (adjoint of im2col).
template <typename T>
void col2im_add(const ConvGeometry& g, const T* col, T* image);

/// Direct convolution of a [N,Cin,H,W] batch, serial. Test/benchmark oracle.
template <typename T>
void conv2d_reference(const ConvGeometry& g, std::size_t batch, std::size_t out_channels,
                      const T* x, const T* weight, const T* bias, T* y);

/// Same contract as conv2d_reference, computed as im2col + gemm per image.
template <typename T>
void conv2d_gemm(const ConvGeometry& g, std::size_t batch, std::size_t out_channels, const T* x,
                 const T* weight, const T* bias, T* y);

}  // namespace pfnet::kernels

#endif  // PFNET_KERNELS_HPP_
