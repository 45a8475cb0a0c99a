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

// PointFlow module: saliency-guided and boundary-guided point selection
// between two adjacent pyramid levels, followed by point-wise affinity
// propagation from the coarse level into the fine one.

#ifndef PFNET_POINTFLOW_HPP_
#define PFNET_POINTFLOW_HPP_

#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "pfnet/autodiff.hpp"
#include "pfnet/nn.hpp"

namespace pfnet {

enum class Direction { kTopDown, kBottomUp, kTopDownThenBottomUp };
enum class EdgeMode { kSubtraction, kDirect, kAddition };
enum class SalientSampling { kMaxPool, kUniformRandom, kAttentionTopK };

std::string_view to_string(Direction d);
std::string_view to_string(EdgeMode m);
std::string_view to_string(SalientSampling s);
Direction parse_direction(std::string_view s);
EdgeMode parse_edge_mode(std::string_view s);
SalientSampling parse_salient_sampling(std::string_view s);

struct PfmConfig {
  std::size_t salient_kh = 14;
  std::size_t salient_kw = 14;
  std::size_t boundary_k = 128;  // 0 disables the boundary flow
  Direction direction = Direction::kTopDown;
  EdgeMode edge_mode = EdgeMode::kSubtraction;
  SalientSampling salient_sampling = SalientSampling::kMaxPool;
  double affinity_scale = 1.0;
  bool salient_flow = true;
  bool boundary_flow = true;
  std::size_t smoothing_kernel = 3;  // box filter applied to the saliency map
  std::uint64_t sampling_seed = 0;   // only used by uniform_random

  bool boundary_enabled() const { return boundary_flow && boundary_k > 0; }
};

/// Shrinks the point budgets of `cfg` for an h x w level-l grid: at most half
/// the resolution per axis for the salient partition, at most a quarter of the
/// cells for the boundary top-K, and an odd smoothing kernel that fits the map.
PfmConfig fit_to_grid(const PfmConfig& cfg, std::size_t h, std::size_t w);

template <typename T>
struct PfmParams {
  ConvParams<T> saliency;  // 3x3, 2C -> 1
  ConvParams<T> boundary;  // 1x1, C -> 1
};

/// Selected points of one batch item, with the score that selected them.
struct PointSet {
  std::vector<NormalizedPoint> points;
  std::vector<double> scores;
};

template <typename T>
struct SalientMatch {
  Var<T> attended;                // F_l * up(MaxPool(M_l)) + F_l
  std::vector<PointSet> points;   // per batch item
};

template <typename T>
struct BoundaryMatch {
  Var<T> boundary_map;            // [N,1,h,w], values in (0,1)
  std::vector<PointSet> points;   // per batch item, level-l cell centers
};

template <typename T>
struct PfmOutput {
  Var<T> refined;       // fine level (l-1), F_{l-1}'s shape
  Var<T> refined_high;  // coarse level (l); differs from F_l only for bottom-up directions
  Var<T> saliency;      // M_l
  Var<T> boundary_map;  // B_l; unbound when the boundary flow is disabled
  std::vector<PointSet> salient_points;
  std::vector<PointSet> boundary_points;
};

/// M_l = sigmoid(conv3x3(concat(F_l, resize(F_{l-1} -> F_l size)))).
template <typename T>
Var<T> compute_saliency(const Var<T>& f_high, const Var<T>& f_low, const ConvParams<T>& conv);

template <typename T>
SalientMatch<T> salient_match(const Var<T>& f_high, const Var<T>& saliency, const PfmConfig& cfg);

template <typename T>
BoundaryMatch<T> boundary_branch(const Var<T>& f_high, const Var<T>& saliency,
                                 const ConvParams<T>& predict, const PfmConfig& cfg);

/// Softmax affinity between the destination samples (queries) and the source
/// samples (keys/values) at the same points, plus the residual query:
/// softmax(scale * Q K^T) K + Q, returned as [K, C].
template <typename T>
Var<T> point_propagate(const Var<T>& source, const Var<T>& destination, std::size_t batch,
                       std::span<const NormalizedPoint> pts, double affinity_scale = 1.0);

template <typename T>
PfmOutput<T> pfm_forward(const Var<T>& f_high, const Var<T>& f_low, const PfmConfig& cfg,
                         const PfmParams<T>& params);

/// Brute-force cross-level affinity: every grid center of `source` is a
/// point; each point's query is sampled from `destination`, attends over all
/// source cells, and the result is written into a copy of `destination`.
/// Refuses more than 4096 source points.
template <typename T>
Tensor<T> dense_affinity_reference(const Tensor<T>& source, const Tensor<T>& destination,
                                   double affinity_scale = 1.0);

/// Point dump rows: batch,flow,u,v,score.
void write_point_csv(std::ostream& os, std::string_view flow, std::span<const PointSet> sets,
                     bool header);

}  // namespace pfnet

#endif  // PFNET_POINTFLOW_HPP_
