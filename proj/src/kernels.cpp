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

#include "pfnet/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace pfnet::kernels {
namespace {

// Register tiles are written with GCC/Clang vector extensions: 64-byte lanes
// (one AVX-512 register, or a pair/quad of narrower ones elsewhere).
template <typename T>
struct Lane;
template <>
struct Lane<float> {
  using type = float __attribute__((vector_size(64)));
};
template <>
struct Lane<double> {
  using type = double __attribute__((vector_size(64)));
};
template <typename T>
constexpr std::size_t kLaneWidth = 64 / sizeof(T);

constexpr std::size_t kTileRows = 8;
constexpr std::size_t kTileLanes = 2;
constexpr std::size_t kDepthBlock = 256;
constexpr std::size_t kColBlock = 480;

// MR x (NV lanes) register tile over a packed A panel (MR x depth, column
// major) and a packed B block. The accumulators are seeded from C on every
// depth block after the first, so each element is summed in ascending k
// exactly like the naive loop.
template <typename T, std::size_t MR, std::size_t NV>
inline void micro_tile(std::size_t depth, const T* a_panel, const T* b, std::size_t ldb, T* c,
                       std::size_t ldc, bool seed_zero) {
  using V = typename Lane<T>::type;
  constexpr std::size_t W = kLaneWidth<T>;
  V acc[MR][NV];
  for (std::size_t r = 0; r < MR; ++r) {
    for (std::size_t q = 0; q < NV; ++q) {
      if (seed_zero) {
        acc[r][q] = V{};
      } else {
        std::memcpy(&acc[r][q], c + r * ldc + q * W, sizeof(V));
      }
    }
  }
  for (std::size_t p = 0; p < depth; ++p) {
    V bv[NV];
    for (std::size_t q = 0; q < NV; ++q) std::memcpy(&bv[q], b + p * ldb + q * W, sizeof(V));
    const T* ap = a_panel + p * MR;
#pragma GCC unroll 16
    for (std::size_t r = 0; r < MR; ++r) {
      const T av = ap[r];
#pragma GCC unroll 4
      for (std::size_t q = 0; q < NV; ++q) acc[r][q] += av * bv[q];
    }
  }
  for (std::size_t r = 0; r < MR; ++r) {
    for (std::size_t q = 0; q < NV; ++q) std::memcpy(c + r * ldc + q * W, &acc[r][q], sizeof(V));
  }
}

// Up to four columns of an MR-row panel; lanes run across the rows so narrow
// outputs (tiny feature maps) still use vector FMAs.
template <typename T, std::size_t MR>
inline void narrow_tile(std::size_t depth, std::size_t cols, const T* a_panel, const T* b,
                        std::size_t ldb, T* c, std::size_t ldc, bool seed_zero) {
  typedef T V __attribute__((vector_size(MR * sizeof(T))));
  constexpr std::size_t kGroup = 4;
  V acc[kGroup] = {};
  for (std::size_t q = 0; q < cols; ++q) {
    for (std::size_t r = 0; r < MR; ++r) acc[q][r] = seed_zero ? T(0) : c[r * ldc + q];
  }
  for (std::size_t p = 0; p < depth; ++p) {
    V av;
    std::memcpy(&av, a_panel + p * MR, sizeof(V));
    for (std::size_t q = 0; q < kGroup; ++q) acc[q] += av * (q < cols ? b[p * ldb + q] : T(0));
  }
  for (std::size_t q = 0; q < cols; ++q) {
    for (std::size_t r = 0; r < MR; ++r) c[r * ldc + q] = acc[q][r];
  }
}

template <typename T>
inline void edge_tile(std::size_t rows, std::size_t cols, std::size_t depth, const T* a,
                      std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc,
                      bool seed_zero) {
  constexpr std::size_t kChunk = 16;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t q0 = 0; q0 < cols; q0 += kChunk) {
      const std::size_t width = std::min(kChunk, cols - q0);
      T acc[kChunk];
      for (std::size_t q = 0; q < width; ++q) acc[q] = seed_zero ? T(0) : c[r * ldc + q0 + q];
      for (std::size_t p = 0; p < depth; ++p) {
        const T av = a[r * lda + p];
        const T* bp = b + p * ldb + q0;
        for (std::size_t q = 0; q < width; ++q) acc[q] += av * bp[q];
      }
      for (std::size_t q = 0; q < width; ++q) c[r * ldc + q0 + q] = acc[q];
    }
  }
}

// Multiply-add fused exactly when the compiler contracts the blocked kernel's
// vector FMAs, so the two stay bitwise equal.
template <typename T>
inline T madd(T a, T b, T acc) {
#if defined(__FP_FAST_FMA) && defined(__FP_FAST_FMAF)
  return std::fma(a, b, acc);
#else
  return acc + a * b;
#endif
}

template <typename T>
std::vector<T> transposed(const T* src, std::size_t rows, std::size_t cols) {
  std::vector<T> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = src[i * cols + j];
  }
  return out;
}

}  // namespace

template <typename T>
void gemm(Op op_a, Op op_b, std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b,
          T* c, bool accumulate) {
  constexpr std::size_t MR = kTileRows;
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate) std::fill(c, c + m * n, T(0));
    return;
  }
  std::vector<T> a_rows;
  if (op_a == Op::kTranspose) {
    a_rows = transposed(a, k, m);
    a = a_rows.data();
  }
  // Packed B block: up to kDepthBlock x kColBlock, leading dimension ldp.
  const std::size_t ldp = std::min(n, kColBlock);
  std::vector<T> packed(std::min(k, kDepthBlock) * ldp);
  const std::size_t row_blocks = (m + MR - 1) / MR;

  for (std::size_t jc = 0; jc < n; jc += kColBlock) {
    const std::size_t nc = std::min(kColBlock, n - jc);
    for (std::size_t pc = 0; pc < k; pc += kDepthBlock) {
      const std::size_t kc = std::min(kDepthBlock, k - pc);
      if (op_b == Op::kNone) {
        for (std::size_t p = 0; p < kc; ++p) {
          std::memcpy(packed.data() + p * ldp, b + (pc + p) * n + jc, nc * sizeof(T));
        }
      } else {
        // B is stored n x k: walk its rows contiguously.
        for (std::size_t q = 0; q < nc; ++q) {
          const T* src = b + (jc + q) * k + pc;
          for (std::size_t p = 0; p < kc; ++p) packed[p * ldp + q] = src[p];
        }
      }
      const bool seed_zero = pc == 0 && !accumulate;
      constexpr std::size_t W = kLaneWidth<T>;
      const std::size_t wide_cols = nc - nc % (kTileLanes * W);
      const std::size_t lane_cols = nc - nc % W;

#pragma omp parallel for schedule(static)
      for (std::size_t blk = 0; blk < row_blocks; ++blk) {
        const std::size_t i = blk * MR;
        const std::size_t rows = std::min(MR, m - i);
        const T* a_blk = a + i * k + pc;
        T* c_blk = c + i * n + jc;
        if (rows == MR) {
          T a_panel[MR * kDepthBlock];
          for (std::size_t p = 0; p < kc; ++p) {
            for (std::size_t r = 0; r < MR; ++r) a_panel[p * MR + r] = a_blk[r * k + p];
          }
          std::size_t j = 0;
          for (; j < wide_cols; j += kTileLanes * W) {
            micro_tile<T, MR, kTileLanes>(kc, a_panel, packed.data() + j, ldp, c_blk + j, n,
                                          seed_zero);
          }
          for (; j < lane_cols; j += W) {
            micro_tile<T, MR, 1>(kc, a_panel, packed.data() + j, ldp, c_blk + j, n, seed_zero);
          }
          // Remaining columns in groups of four, vectorized across the panel rows.
          for (; j < nc; j += 4) {
            narrow_tile<T, MR>(kc, std::min<std::size_t>(4, nc - j), a_panel, packed.data() + j,
                               ldp, c_blk + j, n, seed_zero);
          }
        } else {
          edge_tile(rows, nc, kc, a_blk, k, packed.data(), ldp, c_blk, n, seed_zero);
        }
      }
    }
  }
}

template <typename T>
void gemm_reference(Op op_a, Op op_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
                    const T* b, T* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T s = accumulate ? c[i * n + j] : T(0);
      for (std::size_t p = 0; p < k; ++p) {
        const T av = op_a == Op::kNone ? a[i * k + p] : a[p * m + i];
        const T bv = op_b == Op::kNone ? b[p * n + j] : b[j * k + p];
        s = madd(av, bv, s);
      }
      c[i * n + j] = s;
    }
  }
}

template <typename T>
void im2col(const ConvGeometry& g, const T* image, T* col) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const std::size_t rows = g.col_rows();
#pragma omp parallel for schedule(static) if (rows * oh * ow > 65536)
  for (std::size_t row = 0; row < rows; ++row) {
    const std::size_t kx = row % g.kernel_w;
    const std::size_t ky = (row / g.kernel_w) % g.kernel_h;
    const std::size_t ch = row / (g.kernel_w * g.kernel_h);
    const T* plane = image + ch * g.height * g.width;
    T* out = col + row * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                static_cast<std::ptrdiff_t>(g.padding);
      T* out_row = out + oy * ow;
      if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
        std::fill(out_row, out_row + ow, T(0));
        continue;
      }
      const T* in_row = plane + static_cast<std::size_t>(iy) * g.width;
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                  static_cast<std::ptrdiff_t>(g.padding);
        out_row[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width))
                          ? T(0)
                          : in_row[static_cast<std::size_t>(ix)];
      }
    }
  }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* col, T* image) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const std::size_t kk = g.kernel_h * g.kernel_w;
  // Parallel over channels: each channel plane is written by one thread and
  // its kernel offsets are folded in a fixed order.
#pragma omp parallel for schedule(static) if (g.col_rows() * oh * ow > 65536)
  for (std::size_t ch = 0; ch < g.channels; ++ch) {
    T* plane = image + ch * g.height * g.width;
    for (std::size_t kidx = 0; kidx < kk; ++kidx) {
      const std::size_t ky = kidx / g.kernel_w, kx = kidx % g.kernel_w;
      const T* in = col + (ch * kk + kidx) * oh * ow;
      for (std::size_t oy = 0; oy < oh; ++oy) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                  static_cast<std::ptrdiff_t>(g.padding);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
        T* dst = plane + static_cast<std::size_t>(iy) * g.width;
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                    static_cast<std::ptrdiff_t>(g.padding);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
          dst[static_cast<std::size_t>(ix)] += in[oy * ow + ox];
        }
      }
    }
  }
}

template <typename T>
void conv2d_reference(const ConvGeometry& g, std::size_t batch, std::size_t out_channels,
                      const T* x, const T* weight, const T* bias, T* y) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t co = 0; co < out_channels; ++co) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          T s = T(0);
          for (std::size_t ci = 0; ci < g.channels; ++ci) {
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                          static_cast<std::ptrdiff_t>(g.padding);
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                          static_cast<std::ptrdiff_t>(g.padding);
                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.height) ||
                    ix >= static_cast<std::ptrdiff_t>(g.width)) {
                  continue;
                }
                const T xv = x[((n * g.channels + ci) * g.height + static_cast<std::size_t>(iy)) *
                                   g.width +
                               static_cast<std::size_t>(ix)];
                const T wv = weight[((co * g.channels + ci) * g.kernel_h + ky) * g.kernel_w + kx];
                s += xv * wv;
              }
            }
          }
          y[((n * out_channels + co) * oh + oy) * ow + ox] = s + (bias ? bias[co] : T(0));
        }
      }
    }
  }
}

template <typename T>
void conv2d_gemm(const ConvGeometry& g, std::size_t batch, std::size_t out_channels, const T* x,
                 const T* weight, const T* bias, T* y) {
  const std::size_t plane_in = g.channels * g.height * g.width;
  const std::size_t cols = g.col_cols();
  std::vector<T> col(g.col_rows() * cols);
  for (std::size_t n = 0; n < batch; ++n) {
    im2col(g, x + n * plane_in, col.data());
    T* out = y + n * out_channels * cols;
    gemm(Op::kNone, Op::kNone, out_channels, cols, g.col_rows(), weight, col.data(), out);
    if (bias != nullptr) {
      for (std::size_t co = 0; co < out_channels; ++co) {
        for (std::size_t j = 0; j < cols; ++j) out[co * cols + j] += bias[co];
      }
    }
  }
}

#define PFNET_INSTANTIATE(T)                                                                    \
  template void gemm<T>(Op, Op, std::size_t, std::size_t, std::size_t, const T*, const T*, T*,  \
                        bool);                                                                   \
  template void gemm_reference<T>(Op, Op, std::size_t, std::size_t, std::size_t, const T*,      \
                                  const T*, T*, bool);                                           \
  template void im2col<T>(const ConvGeometry&, const T*, T*);                                   \
  template void col2im_add<T>(const ConvGeometry&, const T*, T*);                               \
  template void conv2d_reference<T>(const ConvGeometry&, std::size_t, std::size_t, const T*,    \
                                    const T*, const T*, T*);                                     \
  template void conv2d_gemm<T>(const ConvGeometry&, std::size_t, std::size_t, const T*,         \
                               const T*, const T*, T*);

PFNET_INSTANTIATE(float)
PFNET_INSTANTIATE(double)
#undef PFNET_INSTANTIATE

}  // namespace pfnet::kernels
