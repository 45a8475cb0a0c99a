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

#include "pfnet/pointflow.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>

#include "pfnet/ops.hpp"
#include "pfnet/random.hpp"

namespace pfnet {

std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::kTopDown: return "top_down";
    case Direction::kBottomUp: return "bottom_up";
    case Direction::kTopDownThenBottomUp: return "td_then_bu";
  }
  return "?";
}

std::string_view to_string(EdgeMode m) {
  switch (m) {
    case EdgeMode::kSubtraction: return "subtraction";
    case EdgeMode::kDirect: return "direct";
    case EdgeMode::kAddition: return "addition";
  }
  return "?";
}

std::string_view to_string(SalientSampling s) {
  switch (s) {
    case SalientSampling::kMaxPool: return "max_pool";
    case SalientSampling::kUniformRandom: return "uniform_random";
    case SalientSampling::kAttentionTopK: return "attention_topk";
  }
  return "?";
}

Direction parse_direction(std::string_view s) {
  if (s == "top_down" || s == "td") return Direction::kTopDown;
  if (s == "bottom_up" || s == "bu") return Direction::kBottomUp;
  if (s == "td_then_bu") return Direction::kTopDownThenBottomUp;
  throw ConfigError("unknown direction '" + std::string(s) + "'");
}

EdgeMode parse_edge_mode(std::string_view s) {
  if (s == "subtraction") return EdgeMode::kSubtraction;
  if (s == "direct") return EdgeMode::kDirect;
  if (s == "addition") return EdgeMode::kAddition;
  throw ConfigError("unknown edge mode '" + std::string(s) + "'");
}

SalientSampling parse_salient_sampling(std::string_view s) {
  if (s == "max_pool") return SalientSampling::kMaxPool;
  if (s == "uniform_random") return SalientSampling::kUniformRandom;
  if (s == "attention_topk") return SalientSampling::kAttentionTopK;
  throw ConfigError("unknown salient sampling '" + std::string(s) + "'");
}

PfmConfig fit_to_grid(const PfmConfig& cfg, std::size_t h, std::size_t w) {
  PfmConfig out = cfg;
  out.salient_kh = std::min(cfg.salient_kh, std::max<std::size_t>(1, h / 2));
  out.salient_kw = std::min(cfg.salient_kw, std::max<std::size_t>(1, w / 2));
  if (cfg.boundary_k > 0) out.boundary_k = std::min(cfg.boundary_k, std::max<std::size_t>(1, h * w / 4));
  std::size_t k = std::min({cfg.smoothing_kernel, h, w});
  if (k % 2 == 0) --k;
  out.smoothing_kernel = std::max<std::size_t>(1, k);
  return out;
}

namespace {

template <typename T>
void require_adjacent(const Var<T>& f_high, const Var<T>& f_low) {
  const Shape& hi = f_high.shape();
  const Shape& lo = f_low.shape();
  if (hi.size() != 4 || lo.size() != 4 || hi[0] != lo[0] || hi[1] != lo[1] ||
      lo[2] != 2 * hi[2] || lo[3] != 2 * hi[3]) {
    throw ShapeError("pointflow: expected F_l [N,C,h,w] and F_l-1 [N,C,2h,2w], got " +
                     shape_str(hi) + " and " + shape_str(lo));
  }
}

template <typename T>
PointSet points_from_indices(std::span<const std::size_t> idx, const T* scores, std::size_t h,
                             std::size_t w) {
  PointSet set;
  set.points.reserve(idx.size());
  set.scores.reserve(idx.size());
  for (std::size_t i : idx) {
    set.points.push_back(cell_center(i / w, i % w, h, w));
    set.scores.push_back(static_cast<double>(scores[i]));
  }
  return set;
}

// Scatters one flow for every batch item.
template <typename T>
Var<T> propagate_flow(const Var<T>& source, const Var<T>& destination, Var<T> base,
                      const std::vector<PointSet>& sets, double affinity_scale) {
  for (std::size_t n = 0; n < sets.size(); ++n) {
    const auto& pts = sets[n].points;
    if (pts.empty()) continue;
    Var<T> rows = point_propagate(source, destination, n, pts, affinity_scale);
    base = scatter_points(base, n, pts, rows);
  }
  return base;
}

}  // namespace

template <typename T>
Var<T> compute_saliency(const Var<T>& f_high, const Var<T>& f_low, const ConvParams<T>& conv) {
  require_adjacent(f_high, f_low);
  const Var<T> low_resized = bilinear_resize(f_low, f_high.dim(2), f_high.dim(3));
  return sigmoid(conv2d(concat_channels({f_high, low_resized}), conv));
}

template <typename T>
SalientMatch<T> salient_match(const Var<T>& f_high, const Var<T>& saliency, const PfmConfig& cfg) {
  const std::size_t batch = f_high.dim(0), h = f_high.dim(2), w = f_high.dim(3);
  if (saliency.shape() != Shape{batch, 1, h, w}) {
    throw ShapeError("salient_match: saliency map must be [N,1,h,w], got " +
                     shape_str(saliency.shape()));
  }
  if (cfg.salient_kh == 0 || cfg.salient_kw == 0 || cfg.salient_kh > h || cfg.salient_kw > w) {
    throw ShapeError("salient_match: salient kernel " + std::to_string(cfg.salient_kh) + "x" +
                     std::to_string(cfg.salient_kw) + " exceeds the " + std::to_string(h) + "x" +
                     std::to_string(w) + " map");
  }
  const MaxPoolResult<T> pool = adaptive_max_pool(saliency, cfg.salient_kh, cfg.salient_kw);
  const Var<T> attention = bilinear_resize(pool.pooled, h, w);
  SalientMatch<T> out;
  out.attended = add(mul(f_high, attention), f_high);

  const std::size_t cells = cfg.salient_kh * cfg.salient_kw;
  const T* m = saliency.value().data();
  for (std::size_t n = 0; n < batch; ++n) {
    const T* plane = m + n * h * w;
    switch (cfg.salient_sampling) {
      case SalientSampling::kMaxPool:
        out.points.push_back(points_from_indices(
            std::span<const std::size_t>(pool.argmax.data() + n * cells, cells), plane, h, w));
        break;
      case SalientSampling::kUniformRandom: {
        Rng rng(mix_seed(cfg.sampling_seed, n));
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < cfg.salient_kh; ++i) {
          const Region ry = adaptive_region(i, cfg.salient_kh, h);
          for (std::size_t j = 0; j < cfg.salient_kw; ++j) {
            const Region rx = adaptive_region(j, cfg.salient_kw, w);
            const std::size_t y = ry.begin + rng.below(ry.end - ry.begin);
            const std::size_t x = rx.begin + rng.below(rx.end - rx.begin);
            idx.push_back(y * w + x);
          }
        }
        out.points.push_back(points_from_indices(std::span<const std::size_t>(idx), plane, h, w));
        break;
      }
      case SalientSampling::kAttentionTopK:
        break;
    }
  }
  if (cfg.salient_sampling == SalientSampling::kAttentionTopK) {
    const auto top = topk_select(saliency.value(), cells);
    for (std::size_t n = 0; n < batch; ++n) {
      out.points.push_back(points_from_indices(std::span<const std::size_t>(top[n]), m + n * h * w, h, w));
    }
  }
  return out;
}

template <typename T>
BoundaryMatch<T> boundary_branch(const Var<T>& f_high, const Var<T>& saliency,
                                 const ConvParams<T>& predict, const PfmConfig& cfg) {
  const std::size_t batch = f_high.dim(0), h = f_high.dim(2), w = f_high.dim(3);
  if (saliency.shape() != Shape{batch, 1, h, w}) {
    throw ShapeError("boundary_branch: saliency map must be [N,1,h,w]");
  }
  if (cfg.boundary_k > h * w) {
    throw ShapeError("boundary_branch: boundary_k=" + std::to_string(cfg.boundary_k) +
                     " exceeds " + std::to_string(h * w) + " cells");
  }
  Var<T> sharpened = f_high;
  if (cfg.edge_mode != EdgeMode::kDirect) {
    const Var<T> smooth = mul(f_high, box_avg_pool(saliency, cfg.smoothing_kernel));
    sharpened = cfg.edge_mode == EdgeMode::kSubtraction ? sub(f_high, smooth) : add(f_high, smooth);
  }
  BoundaryMatch<T> out;
  out.boundary_map = sigmoid(conv2d(sharpened, predict));
  if (cfg.boundary_k > 0) {
    const auto top = topk_select(out.boundary_map.value(), cfg.boundary_k);
    const T* b = out.boundary_map.value().data();
    for (std::size_t n = 0; n < batch; ++n) {
      out.points.push_back(points_from_indices(std::span<const std::size_t>(top[n]), b + n * h * w, h, w));
    }
  } else {
    out.points.resize(batch);
  }
  return out;
}

template <typename T>
Var<T> point_propagate(const Var<T>& source, const Var<T>& destination, std::size_t batch,
                       std::span<const NormalizedPoint> pts, double affinity_scale) {
  if (pts.empty()) throw ShapeError("point_propagate: empty point list");
  if (source.shape().size() != 4 || destination.shape().size() != 4 ||
      source.dim(1) != destination.dim(1)) {
    throw ShapeError("point_propagate: feature maps must share the channel count");
  }
  const Var<T> query = point_sample(destination, batch, pts);
  const Var<T> key = point_sample(source, batch, pts);
  Var<T> logits = matmul(query, transpose(key));
  if (affinity_scale != 1.0) logits = scale(logits, static_cast<T>(affinity_scale));
  const Var<T> affinity = softmax_rows(logits);
  return add(matmul(affinity, key), query);
}

template <typename T>
PfmOutput<T> pfm_forward(const Var<T>& f_high, const Var<T>& f_low, const PfmConfig& cfg,
                         const PfmParams<T>& params) {
  require_adjacent(f_high, f_low);
  PfmOutput<T> out;
  out.saliency = compute_saliency(f_high, f_low, params.saliency);
  SalientMatch<T> salient = salient_match(f_high, out.saliency, cfg);
  out.salient_points = salient.points;
  if (!cfg.salient_flow) {
    for (auto& s : out.salient_points) s = PointSet{};
  }
  if (cfg.boundary_enabled()) {
    BoundaryMatch<T> boundary = boundary_branch(f_high, out.saliency, params.boundary, cfg);
    out.boundary_map = boundary.boundary_map;
    out.boundary_points = std::move(boundary.points);
  } else {
    out.boundary_points.resize(f_high.dim(0));
  }

  const double s = cfg.affinity_scale;
  out.refined = f_low;
  out.refined_high = f_high;
  if (cfg.direction != Direction::kBottomUp) {
    // Salient rows first, boundary rows second: boundary wins collisions.
    out.refined = propagate_flow(salient.attended, f_low, out.refined, out.salient_points, s);
    out.refined = propagate_flow(f_high, f_low, out.refined, out.boundary_points, s);
  }
  if (cfg.direction != Direction::kTopDown) {
    const Var<T> fine = out.refined;
    out.refined_high = propagate_flow(fine, salient.attended, out.refined_high, out.salient_points, s);
    out.refined_high = propagate_flow(fine, f_high, out.refined_high, out.boundary_points, s);
  }
  return out;
}

template <typename T>
Tensor<T> dense_affinity_reference(const Tensor<T>& source, const Tensor<T>& destination,
                                   double affinity_scale) {
  const Shape& s = source.shape();
  const Shape& d = destination.shape();
  if (s.size() != 4 || d.size() != 4 || s[0] != d[0] || s[1] != d[1]) {
    throw ShapeError("dense_affinity_reference: maps must be [N,C,*,*] with equal N and C");
  }
  const std::size_t batch = s[0], channels = s[1], h = s[2], w = s[3], dh = d[2], dw = d[3];
  const std::size_t points = h * w;
  if (points > 4096) {
    throw ShapeError("dense_affinity_reference: " + std::to_string(points) +
                     " points exceed the 4096-point limit");
  }
  std::vector<T> out = destination.to_vector();
  std::vector<double> query(channels), logits(points);
  for (std::size_t n = 0; n < batch; ++n) {
    const T* src = source.data() + n * channels * points;
    const T* dst = destination.data() + n * channels * dh * dw;
    for (std::size_t p = 0; p < points; ++p) {
      const double u = (static_cast<double>(p / w) + 0.5) / static_cast<double>(h);
      const double v = (static_cast<double>(p % w) + 0.5) / static_cast<double>(w);
      // Bilinear query from the destination grid.
      const double fy = std::clamp(u * static_cast<double>(dh) - 0.5, 0.0, static_cast<double>(dh - 1));
      const double fx = std::clamp(v * static_cast<double>(dw) - 0.5, 0.0, static_cast<double>(dw - 1));
      const auto y0 = static_cast<std::size_t>(fy), x0 = static_cast<std::size_t>(fx);
      const std::size_t y1 = std::min(y0 + 1, dh - 1), x1 = std::min(x0 + 1, dw - 1);
      const double ay = fy - static_cast<double>(y0), ax = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < channels; ++c) {
        const T* plane = dst + c * dh * dw;
        query[c] = (1 - ay) * ((1 - ax) * plane[y0 * dw + x0] + ax * plane[y0 * dw + x1]) +
                   ay * ((1 - ax) * plane[y1 * dw + x0] + ax * plane[y1 * dw + x1]);
      }
      double mx = -HUGE_VAL;
      for (std::size_t q = 0; q < points; ++q) {
        double dot = 0;
        for (std::size_t c = 0; c < channels; ++c) dot += query[c] * src[c * points + q];
        logits[q] = affinity_scale * dot;
        mx = std::max(mx, logits[q]);
      }
      double z = 0;
      for (std::size_t q = 0; q < points; ++q) {
        logits[q] = std::exp(logits[q] - mx);
        z += logits[q];
      }
      const auto cy = std::min(static_cast<std::size_t>(u * static_cast<double>(dh)), dh - 1);
      const auto cx = std::min(static_cast<std::size_t>(v * static_cast<double>(dw)), dw - 1);
      for (std::size_t c = 0; c < channels; ++c) {
        double acc = 0;
        for (std::size_t q = 0; q < points; ++q) acc += logits[q] / z * src[c * points + q];
        out[((n * channels + c) * dh + cy) * dw + cx] = static_cast<T>(acc + query[c]);
      }
    }
  }
  return Tensor<T>(d, std::move(out));
}

void write_point_csv(std::ostream& os, std::string_view flow, std::span<const PointSet> sets,
                     bool header) {
  if (header) os << "batch,flow,u,v,score\n";
  const auto old_precision = os.precision(9);
  for (std::size_t n = 0; n < sets.size(); ++n) {
    for (std::size_t i = 0; i < sets[n].points.size(); ++i) {
      os << n << ',' << flow << ',' << sets[n].points[i].u << ',' << sets[n].points[i].v << ','
         << sets[n].scores[i] << '\n';
    }
  }
  os.precision(old_precision);
}

#define PFNET_INSTANTIATE(T)                                                                     \
  template Var<T> compute_saliency<T>(const Var<T>&, const Var<T>&, const ConvParams<T>&);       \
  template SalientMatch<T> salient_match<T>(const Var<T>&, const Var<T>&, const PfmConfig&);     \
  template BoundaryMatch<T> boundary_branch<T>(const Var<T>&, const Var<T>&, const ConvParams<T>&, \
                                               const PfmConfig&);                                \
  template Var<T> point_propagate<T>(const Var<T>&, const Var<T>&, std::size_t,                  \
                                     std::span<const NormalizedPoint>, double);                  \
  template PfmOutput<T> pfm_forward<T>(const Var<T>&, const Var<T>&, const PfmConfig&,           \
                                       const PfmParams<T>&);                                     \
  template Tensor<T> dense_affinity_reference<T>(const Tensor<T>&, const Tensor<T>&, double);

PFNET_INSTANTIATE(float)
PFNET_INSTANTIATE(double)
#undef PFNET_INSTANTIATE

}  // namespace pfnet
