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

#include "pfnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pfnet/kernels.hpp"

namespace pfnet {
namespace {

enum class Broadcast { kSame, kPerChannel, kSpatialMap };

Broadcast broadcast_rule(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return Broadcast::kSame;
  if (a.size() == 4 && b.size() == 4) {
    if (b[0] == 1 && b[1] == a[1] && b[2] == 1 && b[3] == 1) return Broadcast::kPerChannel;
    if (b[0] == a[0] && b[1] == 1 && b[2] == a[2] && b[3] == a[3]) return Broadcast::kSpatialMap;
  }
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                   shape_str(b));
}

// Index into b for element i of a under the broadcast rule.
struct BroadcastIndex {
  Broadcast rule;
  std::size_t channels, plane;
  std::size_t operator()(std::size_t i) const {
    switch (rule) {
      case Broadcast::kSame:
        return i;
      case Broadcast::kPerChannel:
        return (i / plane) % channels;
      case Broadcast::kSpatialMap:
        return (i / (plane * channels)) * plane + i % plane;
    }
    return i;
  }
};

template <typename T>
std::size_t require_matrix(const Var<T>& x, const char* op) {
  if (x.shape().size() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(x.shape()));
  }
  return x.dim(0);
}

}  // namespace

template <typename T>
Var<T> unary(UnaryKind kind, const Var<T>& x) {
  const auto in = x.value().values();
  std::vector<T> out(in.size());
  const char* name = "unary";
  switch (kind) {
    case UnaryKind::kRelu:
      name = "relu";
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
      break;
    case UnaryKind::kSigmoid: {
      name = "sigmoid";
      // Clamped so the result stays strictly inside (0, 1) at any precision.
      const T lo = std::numeric_limits<T>::min();
      const T hi = std::nextafter(T(1), T(0));
      for (std::size_t i = 0; i < in.size(); ++i) {
        const T v = in[i];
        const T s = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
        out[i] = std::clamp(s, lo, hi);
      }
      break;
    }
    case UnaryKind::kExp:
      name = "exp";
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::exp(in[i]);
      break;
    case UnaryKind::kNeg:
      name = "neg";
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = -in[i];
      break;
  }
  Tensor<T> y(x.shape(), std::move(out));
  return x.tape()->record(
      name, y, {x},
      [x, y, kind](std::span<const T> g, Tape<T>& t) {
        const auto xv = x.value().values();
        const auto yv = y.values();
        std::vector<T> dx(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
          switch (kind) {
            case UnaryKind::kRelu: dx[i] = xv[i] > T(0) ? g[i] : T(0); break;
            case UnaryKind::kSigmoid: dx[i] = g[i] * yv[i] * (T(1) - yv[i]); break;
            case UnaryKind::kExp: dx[i] = g[i] * yv[i]; break;
            case UnaryKind::kNeg: dx[i] = -g[i]; break;
          }
        }
        t.accumulate(x, dx);
      });
}

template <typename T>
Var<T> binary(BinaryKind kind, const Var<T>& a, const Var<T>& b) {
  const char* name = kind == BinaryKind::kAdd ? "add" : kind == BinaryKind::kSub ? "sub" : "mul";
  const Shape& sa = a.shape();
  const Broadcast rule = broadcast_rule(sa, b.shape(), name);
  const BroadcastIndex bidx{rule, sa.size() == 4 ? sa[1] : 1,
                            sa.size() == 4 ? sa[2] * sa[3] : 1};
  const auto av = a.value().values();
  const auto bv = b.value().values();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    const T y = bv[bidx(i)];
    switch (kind) {
      case BinaryKind::kAdd: out[i] = av[i] + y; break;
      case BinaryKind::kSub: out[i] = av[i] - y; break;
      case BinaryKind::kMul: out[i] = av[i] * y; break;
    }
  }
  return a.tape()->record(
      name, Tensor<T>(sa, std::move(out)), {a, b},
      [a, b, kind, bidx](std::span<const T> g, Tape<T>& t) {
        if (t.needs_grad(a)) {
          if (kind == BinaryKind::kMul) {
            const auto bv = b.value().values();
            std::vector<T> da(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) da[i] = g[i] * bv[bidx(i)];
            t.accumulate(a, da);
          } else {
            t.accumulate(a, g);
          }
        }
        std::span<T> db = t.grad_buffer(b);
        if (!db.empty()) {
          const auto av = a.value().values();
          for (std::size_t i = 0; i < g.size(); ++i) {
            switch (kind) {
              case BinaryKind::kAdd: db[bidx(i)] += g[i]; break;
              case BinaryKind::kSub: db[bidx(i)] -= g[i]; break;
              case BinaryKind::kMul: db[bidx(i)] += g[i] * av[i]; break;
            }
          }
        }
      });
}

template <typename T>
Var<T> scale(const Var<T>& x, T factor) {
  const auto in = x.value().values();
  std::vector<T> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] * factor;
  return x.tape()->record("scale", Tensor<T>(x.shape(), std::move(out)), {x},
                          [x, factor](std::span<const T> g, Tape<T>& t) {
                            std::vector<T> dx(g.size());
                            for (std::size_t i = 0; i < g.size(); ++i) dx[i] = g[i] * factor;
                            t.accumulate(x, dx);
                          });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  const std::size_t m = require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<T> out(m * n);
  kernels::gemm(kernels::Op::kNone, kernels::Op::kNone, m, n, k, a.value().data(),
                b.value().data(), out.data());
  return a.tape()->record(
      "matmul", Tensor<T>({m, n}, std::move(out)), {a, b},
      [a, b, m, n, k](std::span<const T> g, Tape<T>& t) {
        using kernels::Op;
        std::span<T> da = t.grad_buffer(a);
        if (!da.empty()) {
          kernels::gemm(Op::kNone, Op::kTranspose, m, k, n, g.data(), b.value().data(), da.data(),
                        true);
        }
        std::span<T> db = t.grad_buffer(b);
        if (!db.empty()) {
          kernels::gemm(Op::kTranspose, Op::kNone, k, n, m, a.value().data(), g.data(), db.data(),
                        true);
        }
      });
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
  const std::size_t rows = require_matrix(a, "transpose");
  const std::size_t cols = a.dim(1);
  const auto in = a.value().values();
  std::vector<T> out(in.size());
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = in[i * cols + j];
  }
  return a.tape()->record("transpose", Tensor<T>({cols, rows}, std::move(out)), {a},
                          [a, rows, cols](std::span<const T> g, Tape<T>& t) {
                            std::span<T> da = t.grad_buffer(a);
                            if (da.empty()) return;
                            for (std::size_t i = 0; i < rows; ++i) {
                              for (std::size_t j = 0; j < cols; ++j) da[i * cols + j] += g[j * rows + i];
                            }
                          });
}

template <typename T>
Var<T> softmax_rows(const Var<T>& x) {
  const std::size_t rows = require_matrix(x, "softmax_rows");
  const std::size_t cols = x.dim(1);
  const auto in = x.value().values();
  for (T v : in) {
    if (!std::isfinite(v)) throw NumericError("softmax_rows: non-finite input");
  }
  std::vector<T> out(in.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = in.data() + r * cols;
    T* o = out.data() + r * cols;
    const T mx = *std::max_element(row, row + cols);
    T total = 0;
    for (std::size_t j = 0; j < cols; ++j) {
      o[j] = std::exp(row[j] - mx);
      total += o[j];
    }
    for (std::size_t j = 0; j < cols; ++j) o[j] /= total;
  }
  Tape<T>& tape = *x.tape();
  Tensor<T> y(x.shape(), std::move(out));
  return tape.record("softmax_rows", y, {x}, [x, y, rows, cols](std::span<const T> g, Tape<T>& t) {
    const auto yv = y.values();
    std::vector<T> dx(g.size());
    for (std::size_t r = 0; r < rows; ++r) {
      T dot = 0;
      for (std::size_t j = 0; j < cols; ++j) dot += g[r * cols + j] * yv[r * cols + j];
      for (std::size_t j = 0; j < cols; ++j) {
        dx[r * cols + j] = yv[r * cols + j] * (g[r * cols + j] - dot);
      }
    }
    t.accumulate(x, dx);
  });
}

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> xs) {
  if (xs.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape& s0 = xs[0].shape();
  if (s0.size() != 4) throw ShapeError("concat_channels: expected [N,C,H,W] inputs");
  std::size_t total_c = 0;
  for (const Var<T>& x : xs) {
    const Shape& s = x.shape();
    if (s.size() != 4 || s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3]) {
      throw ShapeError("concat_channels: spatial mismatch " + shape_str(s0) + " vs " +
                       shape_str(s));
    }
    total_c += s[1];
  }
  const std::size_t batch = s0[0], plane = s0[2] * s0[3];
  std::vector<T> out(batch * total_c * plane);
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Var<T>& x : xs) {
    offsets.push_back(offset);
    const std::size_t c = x.dim(1);
    const T* src = x.value().data();
    for (std::size_t n = 0; n < batch; ++n) {
      std::copy(src + n * c * plane, src + (n + 1) * c * plane,
                out.data() + (n * total_c + offset) * plane);
    }
    offset += c;
  }
  std::vector<Var<T>> inputs(xs.begin(), xs.end());
  return xs[0].tape()->record(
      "concat_channels", Tensor<T>({batch, total_c, s0[2], s0[3]}, std::move(out)), inputs,
      [inputs, offsets, batch, total_c, plane](std::span<const T> g, Tape<T>& t) {
        for (std::size_t i = 0; i < inputs.size(); ++i) {
          std::span<T> dx = t.grad_buffer(inputs[i]);
          if (dx.empty()) continue;
          const std::size_t c = inputs[i].dim(1);
          for (std::size_t n = 0; n < batch; ++n) {
            const T* src = g.data() + (n * total_c + offsets[i]) * plane;
            T* dst = dx.data() + n * c * plane;
            for (std::size_t j = 0; j < c * plane; ++j) dst[j] += src[j];
          }
        }
      });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> y = x.value().reshaped(std::move(shape));
  return x.tape()->record("reshape", y, {x},
                          [x](std::span<const T> g, Tape<T>& t) { t.accumulate(x, g); });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  T total = 0;
  for (T v : x.value().values()) total += v;
  return x.tape()->record("sum", Tensor<T>({1}, total), {x},
                          [x](std::span<const T> g, Tape<T>& t) {
                            std::span<T> dx = t.grad_buffer(x);
                            for (T& d : dx) d += g[0];
                          });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.value().numel()));
}

template <typename T>
Var<T> add_n(std::span<const Var<T>> xs) {
  if (xs.empty()) throw ShapeError("add_n: no inputs");
  Var<T> acc = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
  return acc;
}

#define PFNET_INSTANTIATE(T)                                                    \
  template Var<T> unary<T>(UnaryKind, const Var<T>&);                           \
  template Var<T> binary<T>(BinaryKind, const Var<T>&, const Var<T>&);          \
  template Var<T> scale<T>(const Var<T>&, T);                                   \
  template Var<T> matmul<T>(const Var<T>&, const Var<T>&);                      \
  template Var<T> transpose<T>(const Var<T>&);                                  \
  template Var<T> softmax_rows<T>(const Var<T>&);                               \
  template Var<T> concat_channels<T>(std::span<const Var<T>>);                  \
  template Var<T> reshape<T>(const Var<T>&, Shape);                             \
  template Var<T> sum<T>(const Var<T>&);                                        \
  template Var<T> mean<T>(const Var<T>&);                                       \
  template Var<T> add_n<T>(std::span<const Var<T>>);

PFNET_INSTANTIATE(float)
PFNET_INSTANTIATE(double)
#undef PFNET_INSTANTIATE

}  // namespace pfnet
