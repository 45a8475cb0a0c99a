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

// Run configuration: a sectioned key=value file plus --key=value dot-path
// overrides. Unknown keys are errors; every effective value can be echoed.
#ifndef PFNET_CONFIG_HPP_
#define PFNET_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "pfnet/data.hpp"
#include "pfnet/learn.hpp"
#include "pfnet/network.hpp"

namespace pfnet {

struct DataConfig {
  SceneConfig scene;
  std::size_t count = 250;  // scenes generated in total
  double val_ratio = 0.2;   // trailing share of scenes assigned to val
  // Crop and stride are given at reference resolution and divided by
  // scale_divisor: 896/512 at 1/14 gives 64/37.
  std::size_t crop_ref = 896;
  std::size_t stride_ref = 512;
  std::size_t scale_divisor = 14;
  bool previews = true;  // PPM/PGM copies next to the PFT1 files

  std::size_t val_count() const;
  std::size_t crop_size() const;
  std::size_t crop_stride() const;
};

struct MetricsConfig {
  std::vector<std::size_t> boundary_thresholds{12, 9, 5, 3};  // reference px
  std::size_t threshold_divisor = 4;
};

struct RunConfig {
  std::uint64_t seed = 0;
  NetworkConfig network;
  TrainConfig train;
  DataConfig data;
  MetricsConfig metrics;

  /// Copies the run seed into the sub-configs and checks cross-section rules.
  void finalize();
};

/// Applies `key = value` lines under [section] headers. `origin` names the
/// source in error messages.
void apply_config_text(RunConfig& cfg, std::string_view text, std::string_view origin);
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);
/// Sets one dotted key ("train.epochs", "pfm.gap4.boundary_k", "seed").
void apply_override(RunConfig& cfg, std::string_view key, std::string_view value);

/// Every effective value in file syntax; parsing it back yields the same config.
std::string echo_config(const RunConfig& cfg);
std::vector<std::string> config_keys();

}  // namespace pfnet

#endif  // PFNET_CONFIG_HPP_
