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

// PFNet at desk scale: a small strided backbone, PPM context head,
// channel-aligned FPN decoder with PointFlow modules at the three top-down
// gaps, and a fused 1/4-resolution prediction head.

#ifndef PFNET_NETWORK_HPP_
#define PFNET_NETWORK_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pfnet/autodiff.hpp"
#include "pfnet/nn.hpp"
#include "pfnet/pointflow.hpp"

namespace pfnet {

struct NetworkConfig {
  std::size_t input_h = 64;
  std::size_t input_w = 64;
  std::size_t num_classes = 6;
  std::size_t fpn_channels = 64;
  std::size_t stem_channels = 16;
  std::array<std::size_t, 4> backbone_channels{16, 32, 64, 128};
  std::vector<std::size_t> ppm_bins{1, 2, 3, 6};
  bool use_ppm = true;
  /// PFM settings for gaps 3, 4, 5 (gap l refines level l-1 from level l).
  std::array<PfmConfig, 3> pfm{};
  std::array<bool, 3> pfm_enabled{true, true, true};

  PfmConfig& gap(int l) { return pfm.at(static_cast<std::size_t>(l - 3)); }
  const PfmConfig& gap(int l) const { return pfm.at(static_cast<std::size_t>(l - 3)); }
  bool gap_enabled(int l) const { return pfm_enabled.at(static_cast<std::size_t>(l - 3)); }
  bool any_pfm() const { return pfm_enabled[0] || pfm_enabled[1] || pfm_enabled[2]; }
  /// Throws ConfigError when the input size is not a multiple of 32, etc.
  void validate() const;
};

/// Named trainable tensors plus non-trainable buffers (norm running stats).
template <typename T>
struct ParameterSet {
  std::map<std::string, Tensor<T>> params;
  std::map<std::string, Tensor<T>> buffers;

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& [k, v] : params) out.params.emplace(k, v.template cast<U>());
    for (const auto& [k, v] : buffers) out.buffers.emplace(k, v.template cast<U>());
    return out;
  }
};

/// Seeded scaled-uniform init (bound sqrt(6/fan_in)), zero biases, unit norm
/// gammas, and a -2 bias on every boundary predictor.
template <typename T>
ParameterSet<T> init_params(const NetworkConfig& cfg, std::uint64_t seed);

/// Parameters bound to a tape as leaves.
template <typename T>
struct BoundParams {
  std::map<std::string, Var<T>> vars;
  const ParameterSet<T>* source = nullptr;

  const Var<T>& operator[](const std::string& name) const;
  ConvParams<T> conv(const std::string& prefix, std::size_t stride, std::size_t padding) const;
};

template <typename T>
BoundParams<T> bind(Tape<T>& tape, const ParameterSet<T>& params, bool requires_grad);

/// Training uses batch statistics (and reports them); inference uses the
/// running statistics stored as buffers.
enum class NormMode { kBatch, kRunning };

template <typename T>
struct Pyramid {
  std::array<Var<T>, 4> levels;  // C2..C5 at strides 4, 8, 16, 32
};

template <typename T>
struct ForwardContext {
  NormMode mode = NormMode::kBatch;
  std::map<std::string, NormStats<T>> batch_stats;  // filled in kBatch mode
};

template <typename T>
Pyramid<T> backbone_forward(const Var<T>& image, const BoundParams<T>& p, ForwardContext<T>& ctx);

template <typename T>
Var<T> ppm_forward(const Var<T>& c5, const BoundParams<T>& p, std::span<const std::size_t> bins,
                   ForwardContext<T>& ctx);

/// PPM bins usable on an h x w map (bins larger than the map are dropped).
std::vector<std::size_t> usable_bins(std::span<const std::size_t> bins, std::size_t h, std::size_t w);

struct GapPoints {
  int gap = 0;
  std::size_t level_h = 0, level_w = 0;
  std::vector<PointSet> salient;
  std::vector<PointSet> boundary;
};

template <typename T>
struct NetworkOutput {
  Var<T> logits;                     // [N, classes, H/4, W/4]
  std::vector<Var<T>> boundary_maps; // one per gap with a boundary flow, gap order 3, 4, 5
  std::vector<int> boundary_gaps;
  std::vector<GapPoints> point_sets;
  std::array<Var<T>, 4> decoder;     // refined P2..P5
};

template <typename T>
NetworkOutput<T> pfnet_forward(const Var<T>& image, const BoundParams<T>& p,
                               const NetworkConfig& cfg, ForwardContext<T>& ctx);

/// Exponential moving average update of running statistics (momentum 0.1).
template <typename T>
void update_running_stats(ParameterSet<T>& params,
                          const std::map<std::string, NormStats<T>>& batch_stats,
                          double momentum = 0.1);

}  // namespace pfnet

#endif  // PFNET_NETWORK_HPP_
