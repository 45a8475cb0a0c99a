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

#include "pfnet/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "pfnet/kernels.hpp"

namespace pfnet {
namespace {

void require_4d(const Shape& s, const char* op) {
  if (s.size() != 4) throw ShapeError(std::string(op) + ": expected [N,C,H,W], got " + shape_str(s));
}

// Linear interpolation weights along one axis.
struct Lerp {
  std::size_t i0, i1;
  double w1;  // weight of i1; 0 means "exactly on i0"
};

Lerp lerp_at(double src, std::size_t size) {
  const double hi = static_cast<double>(size - 1);
  src = std::clamp(src, 0.0, hi);
  const double nearest = std::round(src);
  if (std::abs(src - nearest) < 1e-9) src = nearest;
  const auto i0 = static_cast<std::size_t>(std::floor(src));
  const std::size_t i1 = std::min(i0 + 1, size - 1);
  return {i0, i1, src - static_cast<double>(i0)};
}

// Grid-center source coordinate of output index `o` when resizing in -> out.
Lerp resize_lerp(std::size_t o, std::size_t out, std::size_t in) {
  const double src = (static_cast<double>(o) + 0.5) * static_cast<double>(in) /
                         static_cast<double>(out) -
                     0.5;
  return lerp_at(src, in);
}

template <typename T>
T blend(const T* plane, std::size_t width, const Lerp& ly, const Lerp& lx) {
  auto row = [&](std::size_t y) {
    const T a = plane[y * width + lx.i0];
    if (lx.w1 == 0.0) return a;
    const T b = plane[y * width + lx.i1];
    return static_cast<T>(1.0 - lx.w1) * a + static_cast<T>(lx.w1) * b;
  };
  const T top = row(ly.i0);
  if (ly.w1 == 0.0) return top;
  return static_cast<T>(1.0 - ly.w1) * top + static_cast<T>(ly.w1) * row(ly.i1);
}

template <typename T>
void blend_adjoint(T* plane, std::size_t width, const Lerp& ly, const Lerp& lx, T g) {
  const T wy1 = static_cast<T>(ly.w1), wy0 = static_cast<T>(1.0 - ly.w1);
  const T wx1 = static_cast<T>(lx.w1), wx0 = static_cast<T>(1.0 - lx.w1);
  plane[ly.i0 * width + lx.i0] += g * wy0 * wx0;
  plane[ly.i0 * width + lx.i1] += g * wy0 * wx1;
  plane[ly.i1 * width + lx.i0] += g * wy1 * wx0;
  plane[ly.i1 * width + lx.i1] += g * wy1 * wx1;
}

}  // namespace

std::pair<std::size_t, std::size_t> cell_of(const NormalizedPoint& p, std::size_t h,
                                            std::size_t w) {
  auto axis = [](double c, std::size_t n) {
    const double f = std::floor(c * static_cast<double>(n));
    if (f <= 0.0) return std::size_t{0};
    return std::min(static_cast<std::size_t>(f), n - 1);
  };
  return {axis(p.u, h), axis(p.v, w)};
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const ConvParams<T>& p) {
  require_4d(x.shape(), "conv2d");
  const Shape& ws = p.weight.shape();
  if (ws.size() != 4) throw ShapeError("conv2d: weight must be [Cout,Cin,kh,kw]");
  const std::size_t batch = x.dim(0), cout = ws[0];
  if (ws[1] != x.dim(1)) {
    throw ShapeError("conv2d: input has " + std::to_string(x.dim(1)) + " channels, weight expects " +
                     std::to_string(ws[1]));
  }
  if ((ws[2] != 1 && ws[2] != 3) || (ws[3] != 1 && ws[3] != 3)) {
    throw ShapeError("conv2d: kernel must be 1x1 or 3x3, got " + shape_str(ws));
  }
  if (p.bias.shape() != Shape{cout}) throw ShapeError("conv2d: bias must be [Cout]");
  if (p.stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (x.dim(2) + 2 * p.padding < ws[2] || x.dim(3) + 2 * p.padding < ws[3]) {
    throw ShapeError("conv2d: degenerate output size for input " + shape_str(x.shape()));
  }
  const kernels::ConvGeometry g{x.dim(1), x.dim(2), x.dim(3), ws[2], ws[3], p.stride, p.padding};
  const std::size_t oh = g.out_h(), ow = g.out_w();
  std::vector<T> y(batch * cout * oh * ow);
  kernels::conv2d_gemm(g, batch, cout, x.value().data(), p.weight.value().data(),
                       p.bias.value().data(), y.data());

  const Var<T> w = p.weight, b = p.bias;
  return x.tape()->record(
      "conv2d", Tensor<T>({batch, cout, oh, ow}, std::move(y)), {x, w, b},
      [x, w, b, g, batch, cout](std::span<const T> gy, Tape<T>& t) {
        using kernels::Op;
        const std::size_t rows = g.col_rows(), cols = g.col_cols();
        const std::size_t plane_in = g.channels * g.height * g.width;
        std::span<T> dx = t.grad_buffer(x);
        std::span<T> dw = t.grad_buffer(w);
        std::span<T> db = t.grad_buffer(b);
        std::vector<T> col(rows * cols);
        std::vector<T> dcol(dx.empty() ? 0 : rows * cols);
        for (std::size_t n = 0; n < batch; ++n) {
          const T* gyn = gy.data() + n * cout * cols;
          if (!dw.empty()) {
            kernels::im2col(g, x.value().data() + n * plane_in, col.data());
            kernels::gemm(Op::kNone, Op::kTranspose, cout, rows, cols, gyn, col.data(), dw.data(),
                          true);
          }
          if (!db.empty()) {
            for (std::size_t co = 0; co < cout; ++co) {
              T s = 0;
              for (std::size_t j = 0; j < cols; ++j) s += gyn[co * cols + j];
              db[co] += s;
            }
          }
          if (!dx.empty()) {
            kernels::gemm(Op::kTranspose, Op::kNone, rows, cols, cout, w.value().data(), gyn,
                          dcol.data());
            kernels::col2im_add(g, dcol.data(), dx.data() + n * plane_in);
          }
        }
      });
}

template <typename T>
Var<T> channel_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps,
                    NormStats<T>* stats) {
  require_4d(x.shape(), "channel_norm");
  const std::size_t batch = x.dim(0), channels = x.dim(1), plane = x.dim(2) * x.dim(3);
  const std::size_t count = batch * plane;
  if (count < 2) throw ShapeError("channel_norm: each channel needs at least 2 elements");
  if (gamma.shape() != Shape{channels} || beta.shape() != Shape{channels}) {
    throw ShapeError("channel_norm: gamma/beta must be [C]");
  }
  const T* xv = x.value().data();
  const T* gv = gamma.value().data();
  const T* bv = beta.value().data();
  std::vector<T> y(x.value().numel()), xhat(y.size()), inv_std(channels);
  if (stats != nullptr) {
    stats->mean.assign(channels, T(0));
    stats->var.assign(channels, T(0));
  }
  for (std::size_t c = 0; c < channels; ++c) {
    double s = 0;
    for (std::size_t n = 0; n < batch; ++n) {
      const T* p = xv + (n * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
    }
    const double mu = s / static_cast<double>(count);
    double ss = 0;
    for (std::size_t n = 0; n < batch; ++n) {
      const T* p = xv + (n * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) ss += (p[i] - mu) * (p[i] - mu);
    }
    const double var = ss / static_cast<double>(count);
    const double istd = 1.0 / std::sqrt(var + static_cast<double>(eps));
    inv_std[c] = static_cast<T>(istd);
    if (stats != nullptr) {
      stats->mean[c] = static_cast<T>(mu);
      stats->var[c] = static_cast<T>(var);
    }
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t base = (n * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const T h = static_cast<T>((xv[base + i] - mu) * istd);
        xhat[base + i] = h;
        y[base + i] = gv[c] * h + bv[c];
      }
    }
  }
  return x.tape()->record(
      "channel_norm", Tensor<T>(x.shape(), std::move(y)), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), batch, channels,
       plane](std::span<const T> g, Tape<T>& t) {
        const double m = static_cast<double>(batch * plane);
        std::span<T> dx = t.grad_buffer(x);
        std::span<T> dg = t.grad_buffer(gamma);
        std::span<T> dbeta = t.grad_buffer(beta);
        const T* gv = gamma.value().data();
        for (std::size_t c = 0; c < channels; ++c) {
          double sum_g = 0, sum_gx = 0;
          for (std::size_t n = 0; n < batch; ++n) {
            const std::size_t base = (n * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              sum_g += g[base + i];
              sum_gx += g[base + i] * xhat[base + i];
            }
          }
          if (!dg.empty()) dg[c] += static_cast<T>(sum_gx);
          if (!dbeta.empty()) dbeta[c] += static_cast<T>(sum_g);
          if (dx.empty()) continue;
          const double k = static_cast<double>(gv[c]) * inv_std[c] / m;
          for (std::size_t n = 0; n < batch; ++n) {
            const std::size_t base = (n * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              dx[base + i] += static_cast<T>(k * (m * g[base + i] - sum_g - xhat[base + i] * sum_gx));
            }
          }
        }
      });
}

template <typename T>
Var<T> channel_norm_frozen(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                           std::span<const T> mean, std::span<const T> var, T eps) {
  require_4d(x.shape(), "channel_norm_frozen");
  const std::size_t batch = x.dim(0), channels = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (mean.size() != channels || var.size() != channels || gamma.shape() != Shape{channels} ||
      beta.shape() != Shape{channels}) {
    throw ShapeError("channel_norm_frozen: statistics must be [C]");
  }
  std::vector<T> inv_std(channels), shift(mean.begin(), mean.end());
  for (std::size_t c = 0; c < channels; ++c) {
    inv_std[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(var[c]) + eps));
  }
  const T* xv = x.value().data();
  const T* gv = gamma.value().data();
  const T* bv = beta.value().data();
  std::vector<T> y(x.value().numel());
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (n * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        y[base + i] = gv[c] * ((xv[base + i] - shift[c]) * inv_std[c]) + bv[c];
      }
    }
  }
  return x.tape()->record(
      "channel_norm_frozen", Tensor<T>(x.shape(), std::move(y)), {x, gamma, beta},
      [x, gamma, beta, inv_std, shift, batch, channels, plane](std::span<const T> g, Tape<T>& t) {
        std::span<T> dx = t.grad_buffer(x);
        std::span<T> dg = t.grad_buffer(gamma);
        std::span<T> db = t.grad_buffer(beta);
        const T* xv = x.value().data();
        const T* gv = gamma.value().data();
        for (std::size_t n = 0; n < batch; ++n) {
          for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t base = (n * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              const T h = (xv[base + i] - shift[c]) * inv_std[c];
              if (!dx.empty()) dx[base + i] += g[base + i] * gv[c] * inv_std[c];
              if (!dg.empty()) dg[c] += g[base + i] * h;
              if (!db.empty()) db[c] += g[base + i];
            }
          }
        }
      });
}

template <typename T>
MaxPoolResult<T> adaptive_max_pool(const Var<T>& x, std::size_t kh, std::size_t kw) {
  require_4d(x.shape(), "adaptive_max_pool");
  const std::size_t batch = x.dim(0), channels = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (kh == 0 || kw == 0 || kh > h || kw > w) {
    throw ShapeError("adaptive_max_pool: output " + std::to_string(kh) + "x" + std::to_string(kw) +
                     " larger than input " + shape_str(x.shape()));
  }
  const T* xv = x.value().data();
  std::vector<T> out(batch * channels * kh * kw);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t nc = 0; nc < batch * channels; ++nc) {
    const T* plane = xv + nc * h * w;
    for (std::size_t i = 0; i < kh; ++i) {
      const Region ry = adaptive_region(i, kh, h);
      for (std::size_t j = 0; j < kw; ++j) {
        const Region rx = adaptive_region(j, kw, w);
        std::size_t best = ry.begin * w + rx.begin;
        for (std::size_t y = ry.begin; y < ry.end; ++y) {
          for (std::size_t xx = rx.begin; xx < rx.end; ++xx) {
            if (plane[y * w + xx] > plane[best]) best = y * w + xx;
          }
        }
        out[(nc * kh + i) * kw + j] = plane[best];
        argmax[(nc * kh + i) * kw + j] = best;
      }
    }
  }
  Var<T> pooled = x.tape()->record(
      "adaptive_max_pool", Tensor<T>({batch, channels, kh, kw}, std::move(out)), {x},
      [x, argmax, h, w, kh, kw](std::span<const T> g, Tape<T>& t) {
        std::span<T> dx = t.grad_buffer(x);
        if (dx.empty()) return;
        for (std::size_t i = 0; i < g.size(); ++i) dx[(i / (kh * kw)) * h * w + argmax[i]] += g[i];
      });
  return {pooled, std::move(argmax)};
}

template <typename T>
Var<T> adaptive_avg_pool(const Var<T>& x, std::size_t kh, std::size_t kw) {
  require_4d(x.shape(), "adaptive_avg_pool");
  const std::size_t batch = x.dim(0), channels = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (kh == 0 || kw == 0 || kh > h || kw > w) {
    throw ShapeError("adaptive_avg_pool: output " + std::to_string(kh) + "x" + std::to_string(kw) +
                     " larger than input " + shape_str(x.shape()));
  }
  const T* xv = x.value().data();
  std::vector<T> out(batch * channels * kh * kw);
  for (std::size_t nc = 0; nc < batch * channels; ++nc) {
    const T* plane = xv + nc * h * w;
    for (std::size_t i = 0; i < kh; ++i) {
      const Region ry = adaptive_region(i, kh, h);
      for (std::size_t j = 0; j < kw; ++j) {
        const Region rx = adaptive_region(j, kw, w);
        T s = 0;
        for (std::size_t y = ry.begin; y < ry.end; ++y) {
          for (std::size_t xx = rx.begin; xx < rx.end; ++xx) s += plane[y * w + xx];
        }
        out[(nc * kh + i) * kw + j] = s / static_cast<T>((ry.end - ry.begin) * (rx.end - rx.begin));
      }
    }
  }
  return x.tape()->record(
      "adaptive_avg_pool", Tensor<T>({batch, channels, kh, kw}, std::move(out)), {x},
      [x, batch, channels, h, w, kh, kw](std::span<const T> g, Tape<T>& t) {
        std::span<T> dx = t.grad_buffer(x);
        if (dx.empty()) return;
        for (std::size_t nc = 0; nc < batch * channels; ++nc) {
          T* plane = dx.data() + nc * h * w;
          for (std::size_t i = 0; i < kh; ++i) {
            const Region ry = adaptive_region(i, kh, h);
            for (std::size_t j = 0; j < kw; ++j) {
              const Region rx = adaptive_region(j, kw, w);
              const T share = g[(nc * kh + i) * kw + j] /
                              static_cast<T>((ry.end - ry.begin) * (rx.end - rx.begin));
              for (std::size_t y = ry.begin; y < ry.end; ++y) {
                for (std::size_t xx = rx.begin; xx < rx.end; ++xx) plane[y * w + xx] += share;
              }
            }
          }
        }
      });
}

template <typename T>
Var<T> box_avg_pool(const Var<T>& x, std::size_t k) {
  require_4d(x.shape(), "box_avg_pool");
  if (k % 2 == 0) throw ShapeError("box_avg_pool: kernel size must be odd, got " + std::to_string(k));
  const std::size_t h = x.dim(2), w = x.dim(3), planes = x.dim(0) * x.dim(1);
  if (k > std::min(h, w)) throw ShapeError("box_avg_pool: kernel larger than the map");
  const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(k / 2);
  const T norm = T(1) / static_cast<T>(k * k);
  // Visits the in-bounds k x k window of (y, x); zero padding contributes nothing.
  auto window = [h, w, r](std::size_t y, std::size_t xx, auto&& fn) {
    const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(y) - r);
    const std::ptrdiff_t y1 = std::min<std::ptrdiff_t>(h - 1, static_cast<std::ptrdiff_t>(y) + r);
    const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(xx) - r);
    const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(w - 1, static_cast<std::ptrdiff_t>(xx) + r);
    for (std::ptrdiff_t yy = y0; yy <= y1; ++yy) {
      for (std::ptrdiff_t xq = x0; xq <= x1; ++xq) fn(static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xq));
    }
  };
  const T* xv = x.value().data();
  std::vector<T> out(x.value().numel());
  for (std::size_t p = 0; p < planes; ++p) {
    const T* plane = xv + p * h * w;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xx = 0; xx < w; ++xx) {
        T s = 0;
        window(y, xx, [&](std::size_t idx) { s += plane[idx]; });
        out[p * h * w + y * w + xx] = s * norm;
      }
    }
  }
  return x.tape()->record("box_avg_pool", Tensor<T>(x.shape(), std::move(out)), {x},
                          [x, planes, h, w, norm, window](std::span<const T> g, Tape<T>& t) {
                            std::span<T> dx = t.grad_buffer(x);
                            if (dx.empty()) return;
                            for (std::size_t p = 0; p < planes; ++p) {
                              T* plane = dx.data() + p * h * w;
                              for (std::size_t y = 0; y < h; ++y) {
                                for (std::size_t xx = 0; xx < w; ++xx) {
                                  const T share = g[p * h * w + y * w + xx] * norm;
                                  window(y, xx, [&](std::size_t idx) { plane[idx] += share; });
                                }
                              }
                            }
                          });
}

template <typename T>
Var<T> bilinear_resize(const Var<T>& x, std::size_t out_h, std::size_t out_w) {
  require_4d(x.shape(), "bilinear_resize");
  if (out_h == 0 || out_w == 0) throw ShapeError("bilinear_resize: output size must be >= 1");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  std::vector<Lerp> ly(out_h), lx(out_w);
  for (std::size_t i = 0; i < out_h; ++i) ly[i] = resize_lerp(i, out_h, h);
  for (std::size_t j = 0; j < out_w; ++j) lx[j] = resize_lerp(j, out_w, w);
  const T* xv = x.value().data();
  std::vector<T> out(planes * out_h * out_w);
#pragma omp parallel for schedule(static) if (out.size() > 65536)
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < out_h; ++i) {
      for (std::size_t j = 0; j < out_w; ++j) {
        out[(p * out_h + i) * out_w + j] = blend(xv + p * h * w, w, ly[i], lx[j]);
      }
    }
  }
  return x.tape()->record(
      "bilinear_resize", Tensor<T>({x.dim(0), x.dim(1), out_h, out_w}, std::move(out)), {x},
      [x, ly, lx, planes, h, w, out_h, out_w](std::span<const T> g, Tape<T>& t) {
        std::span<T> dx = t.grad_buffer(x);
        if (dx.empty()) return;
#pragma omp parallel for schedule(static) if (g.size() > 65536)
        for (std::size_t p = 0; p < planes; ++p) {
          for (std::size_t i = 0; i < out_h; ++i) {
            for (std::size_t j = 0; j < out_w; ++j) {
              blend_adjoint(dx.data() + p * h * w, w, ly[i], lx[j], g[(p * out_h + i) * out_w + j]);
            }
          }
        }
      });
}

template <typename T>
Var<T> point_sample(const Var<T>& x, std::size_t batch, std::span<const NormalizedPoint> pts) {
  require_4d(x.shape(), "point_sample");
  if (pts.empty()) throw ShapeError("point_sample: empty point list");
  if (batch >= x.dim(0)) throw ShapeError("point_sample: batch index out of range");
  const std::size_t channels = x.dim(1), h = x.dim(2), w = x.dim(3), k = pts.size();
  std::vector<Lerp> ly(k), lx(k);
  for (std::size_t i = 0; i < k; ++i) {
    const NormalizedPoint& p = pts[i];
    if (!(p.u >= 0.0 && p.u <= 1.0 && p.v >= 0.0 && p.v <= 1.0)) {
      throw ShapeError("point_sample: coordinate outside [0,1]");
    }
    ly[i] = lerp_at(p.u * static_cast<double>(h) - 0.5, h);
    lx[i] = lerp_at(p.v * static_cast<double>(w) - 0.5, w);
  }
  const T* base = x.value().data() + batch * channels * h * w;
  std::vector<T> out(k * channels);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      out[i * channels + c] = blend(base + c * h * w, w, ly[i], lx[i]);
    }
  }
  return x.tape()->record(
      "point_sample", Tensor<T>({k, channels}, std::move(out)), {x},
      [x, ly, lx, batch, channels, h, w, k](std::span<const T> g, Tape<T>& t) {
        std::span<T> dx = t.grad_buffer(x);
        if (dx.empty()) return;
        T* base = dx.data() + batch * channels * h * w;
        for (std::size_t i = 0; i < k; ++i) {
          for (std::size_t c = 0; c < channels; ++c) {
            blend_adjoint(base + c * h * w, w, ly[i], lx[i], g[i * channels + c]);
          }
        }
      });
}

template <typename T>
std::vector<std::vector<std::size_t>> topk_select(const Tensor<T>& score, std::size_t k) {
  require_4d(score.shape(), "topk_select");
  if (score.dim(1) != 1) throw ShapeError("topk_select: score map must have one channel");
  const std::size_t plane = score.dim(2) * score.dim(3);
  if (k > plane) {
    throw ShapeError("topk_select: K=" + std::to_string(k) + " exceeds H*W=" + std::to_string(plane));
  }
  std::vector<std::vector<std::size_t>> result(score.dim(0));
  for (std::size_t n = 0; n < score.dim(0); ++n) {
    const T* s = score.data() + n * plane;
    std::vector<std::size_t> idx(plane);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [s](std::size_t a, std::size_t b) {
                        return s[a] > s[b] || (s[a] == s[b] && a < b);
                      });
    idx.resize(k);
    result[n] = std::move(idx);
  }
  return result;
}

template <typename T>
Var<T> scatter_points(const Var<T>& base, std::size_t batch, std::span<const NormalizedPoint> pts,
                      const Var<T>& values) {
  require_4d(base.shape(), "scatter_points");
  if (pts.empty()) return base;
  const std::size_t channels = base.dim(1), h = base.dim(2), w = base.dim(3), k = pts.size();
  if (values.shape() != Shape{k, channels}) {
    throw ShapeError("scatter_points: values " + shape_str(values.shape()) + " do not match " +
                     std::to_string(k) + " points x " + std::to_string(channels) + " channels");
  }
  if (batch >= base.dim(0)) throw ShapeError("scatter_points: batch index out of range");
  // winner[cell] = last point index writing to that cell.
  std::vector<std::ptrdiff_t> winner(h * w, -1);
  for (std::size_t i = 0; i < k; ++i) {
    const auto [cy, cx] = cell_of(pts[i], h, w);
    winner[cy * w + cx] = static_cast<std::ptrdiff_t>(i);
  }
  std::vector<T> out = base.value().to_vector();
  const T* vals = values.value().data();
  T* dst = out.data() + batch * channels * h * w;
  for (std::size_t cell = 0; cell < h * w; ++cell) {
    if (winner[cell] < 0) continue;
    const auto i = static_cast<std::size_t>(winner[cell]);
    for (std::size_t c = 0; c < channels; ++c) dst[c * h * w + cell] = vals[i * channels + c];
  }
  return base.tape()->record(
      "scatter_points", Tensor<T>(base.shape(), std::move(out)), {base, values},
      [base, values, winner, batch, channels, h, w](std::span<const T> g, Tape<T>& t) {
        const std::size_t offset = batch * channels * h * w;
        std::span<T> db = t.grad_buffer(base);
        if (!db.empty()) {
          for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i];
          for (std::size_t cell = 0; cell < h * w; ++cell) {
            if (winner[cell] < 0) continue;
            for (std::size_t c = 0; c < channels; ++c) db[offset + c * h * w + cell] -= g[offset + c * h * w + cell];
          }
        }
        std::span<T> dv = t.grad_buffer(values);
        if (!dv.empty()) {
          for (std::size_t cell = 0; cell < h * w; ++cell) {
            if (winner[cell] < 0) continue;
            const auto i = static_cast<std::size_t>(winner[cell]);
            for (std::size_t c = 0; c < channels; ++c) dv[i * channels + c] += g[offset + c * h * w + cell];
          }
        }
      });
}

#define PFNET_INSTANTIATE(T)                                                                     \
  template Var<T> conv2d<T>(const Var<T>&, const ConvParams<T>&);                                \
  template Var<T> channel_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, T, NormStats<T>*); \
  template Var<T> channel_norm_frozen<T>(const Var<T>&, const Var<T>&, const Var<T>&,            \
                                         std::span<const T>, std::span<const T>, T);             \
  template MaxPoolResult<T> adaptive_max_pool<T>(const Var<T>&, std::size_t, std::size_t);       \
  template Var<T> adaptive_avg_pool<T>(const Var<T>&, std::size_t, std::size_t);                 \
  template Var<T> box_avg_pool<T>(const Var<T>&, std::size_t);                                   \
  template Var<T> bilinear_resize<T>(const Var<T>&, std::size_t, std::size_t);                   \
  template Var<T> point_sample<T>(const Var<T>&, std::size_t, std::span<const NormalizedPoint>); \
  template std::vector<std::vector<std::size_t>> topk_select<T>(const Tensor<T>&, std::size_t);  \
  template Var<T> scatter_points<T>(const Var<T>&, std::size_t, std::span<const NormalizedPoint>, \
                                    const Var<T>&);

PFNET_INSTANTIATE(float)
PFNET_INSTANTIATE(double)
#undef PFNET_INSTANTIATE

}  // namespace pfnet
