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

// Neural-network kernels the PointFlow module is assembled from.

#ifndef PFNET_NN_HPP_
#define PFNET_NN_HPP_

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "pfnet/autodiff.hpp"

namespace pfnet {

/// Resolution-independent location: pixel (i, j) of an H x W map sits at
/// ((i + 0.5) / H, (j + 0.5) / W).
struct NormalizedPoint {
  double u = 0.5;  // vertical
  double v = 0.5;  // horizontal

  friend bool operator==(const NormalizedPoint&, const NormalizedPoint&) = default;
};

inline NormalizedPoint cell_center(std::size_t i, std::size_t j, std::size_t h, std::size_t w) {
  return {(static_cast<double>(i) + 0.5) / static_cast<double>(h),
          (static_cast<double>(j) + 0.5) / static_cast<double>(w)};
}

/// Grid cell containing `p` on an h x w map (clamped to the border).
std::pair<std::size_t, std::size_t> cell_of(const NormalizedPoint& p, std::size_t h, std::size_t w);

/// Adaptive pooling region [begin, end) of output cell `i` when `in` cells
/// are pooled down to `out`: begin = floor(i*in/out), end = ceil((i+1)*in/out).
struct Region {
  std::size_t begin, end;
};
inline Region adaptive_region(std::size_t i, std::size_t out, std::size_t in) {
  return {i * in / out, ((i + 1) * in + out - 1) / out};
}

template <typename T>
struct ConvParams {
  Var<T> weight;  // [Cout, Cin, kh, kw], kh, kw in {1, 3}
  Var<T> bias;    // [Cout]
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// Zero-padded cross-correlation, differentiable w.r.t. x, weight and bias.
template <typename T>
Var<T> conv2d(const Var<T>& x, const ConvParams<T>& p);

/// Per-channel statistics over (N, H, W), as produced by a training-mode norm.
template <typename T>
struct NormStats {
  std::vector<T> mean;
  std::vector<T> var;  // biased
};

/// Standardizes each channel over (N, H, W) with batch statistics, then
/// applies gamma/beta. When `stats` is non-null the batch statistics are
/// written there (for running averages).
template <typename T>
Var<T> channel_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5),
                    NormStats<T>* stats = nullptr);

/// Same affine standardization with fixed statistics (inference).
template <typename T>
Var<T> channel_norm_frozen(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                           std::span<const T> mean, std::span<const T> var, T eps = T(1e-5));

template <typename T>
struct MaxPoolResult {
  Var<T> pooled;  // [N, C, kh, kw]
  /// Flat H*W argmax position per pooled cell, laid out like `pooled`.
  std::vector<std::size_t> argmax;
};

/// Adaptive max pooling; ties go to the smallest flat index. The gradient is
/// routed to the argmax element.
template <typename T>
MaxPoolResult<T> adaptive_max_pool(const Var<T>& x, std::size_t kh, std::size_t kw);

/// Adaptive average pooling under the same region rule.
template <typename T>
Var<T> adaptive_avg_pool(const Var<T>& x, std::size_t kh, std::size_t kw);

/// Stride-1, zero-padded k x k mean (divisor k*k everywhere). Keeps H x W.
template <typename T>
Var<T> box_avg_pool(const Var<T>& x, std::size_t k);

/// Grid-center bilinear resampling with edge clamping.
template <typename T>
Var<T> bilinear_resize(const Var<T>& x, std::size_t out_h, std::size_t out_w);

/// Bilinear 4-neighbor sample of batch item `batch` at each point -> [K, C].
template <typename T>
Var<T> point_sample(const Var<T>& x, std::size_t batch, std::span<const NormalizedPoint> pts);

/// Per batch item, the flat indices of the k largest scores of a [N,1,H,W]
/// map, ordered by descending score then ascending index.
template <typename T>
std::vector<std::vector<std::size_t>> topk_select(const Tensor<T>& score, std::size_t k);

/// Writes row i of `values` ([K, C]) into the cell of pts[i] for batch item
/// `batch`. Later points win collisions. An empty point list returns `base`.
template <typename T>
Var<T> scatter_points(const Var<T>& base, std::size_t batch, std::span<const NormalizedPoint> pts,
                      const Var<T>& values);

}  // namespace pfnet

#endif  // PFNET_NN_HPP_
