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

// Losses, edge targets, optimizer and schedule for training PFNet.
#ifndef PFNET_LEARN_HPP_
#define PFNET_LEARN_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pfnet/autodiff.hpp"
#include "pfnet/data.hpp"
#include "pfnet/network.hpp"

namespace pfnet {

struct TrainConfig {
  std::size_t epochs = 16;
  double base_lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double poly_power = 0.9;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  std::size_t edge_radius = 1;
  double ce_weight = 1.0;
  double bce_weight = 1.0;
  bool augment = true;
  std::size_t checkpoint_every = 0;  // iterations; 0 keeps only the final one

  void validate() const;
};

/// base_lr * (1 - iter/total)^power, clamped at zero past the end.
double poly_lr(double base_lr, std::size_t iter, std::size_t total, double power);

/// Boundary pixels (any 4-neighbor with a different label), dilated by a
/// Chebyshev radius of `radius - 1`, then OR-pooled to each stride. Values are
/// 0/1. A radius of 1 yields the undilated two-sided band.
std::vector<LabelMap> edge_targets_from_mask(const LabelMap& mask, std::size_t radius,
                                             std::span<const std::size_t> strides);

/// Mean binary cross-entropy; predictions are clamped to [1e-7, 1 - 1e-7].
template <typename T>
Var<T> bce_loss(const Var<T>& pred, const Tensor<T>& target);

/// Mean softmax cross-entropy over pixels whose label is not kIgnoreLabel.
/// `masks` holds one label map per batch item, matching the logits' H x W.
template <typename T>
Var<T> ce_loss(const Var<T>& logits, std::span<const LabelMap> masks);

/// SGD with momentum and L2 weight decay:
///   v = momentum * v + (g + wd * w);  w -= lr * v.
class Sgd {
 public:
  Sgd(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}
  void step(ParameterSet<float>& params, const std::map<std::string, Tensor<float>>& grads, double lr);
  const std::map<std::string, std::vector<float>>& velocity() const { return velocity_; }

 private:
  double momentum_, weight_decay_;
  std::map<std::string, std::vector<float>> velocity_;
};

struct StepStats {
  std::size_t iter = 0;
  double lr = 0, ce = 0, bce_total = 0, total = 0;
};

/// Stacks [3,H,W] images into an [N,3,H,W] tensor.
Tensor<float> stack_images(std::span<const SceneSample> batch);

/// One forward/backward/update on `batch`. Throws NumericError naming the
/// iteration and the offending op or parameter path on any NaN/Inf.
StepStats train_step(ParameterSet<float>& params, Sgd& opt, std::span<const SceneSample> batch,
                     const NetworkConfig& net, const TrainConfig& cfg, std::size_t iter,
                     std::size_t total_iter);

using StepCallback = std::function<void(const StepStats&, const ParameterSet<float>&)>;

/// Full training loop over `samples` (already cropped to the network input).
/// Batches are drawn from a per-epoch seeded shuffle with seeded
/// flip/rotation augmentation, so the run is a pure function of the seed.
void train(ParameterSet<float>& params, std::span<const SceneSample> samples, const NetworkConfig& net,
           const TrainConfig& cfg, const StepCallback& on_step);

std::size_t iterations_per_epoch(std::size_t num_samples, std::size_t batch_size);

// ---- checkpoints ------------------------------------------------------------

/// Writes `<stem>.pft` (all params then buffers, name order, one flat f32
/// tensor) and `<stem>.tsv` (kind, name, shape, offset).
void save_checkpoint(const std::filesystem::path& stem, const ParameterSet<float>& params);
ParameterSet<float> load_checkpoint(const std::filesystem::path& stem);

}  // namespace pfnet

#endif  // PFNET_LEARN_HPP_
