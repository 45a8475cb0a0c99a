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

// Synthetic imbalanced aerial-style scenes, crop/augment preprocessing, and
// the PFT1 tensor file format.

#ifndef PFNET_DATA_HPP_
#define PFNET_DATA_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "pfnet/tensor.hpp"

namespace pfnet {

inline constexpr std::uint8_t kIgnoreLabel = 255;

/// Integer class grid, row-major.
struct LabelMap {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> labels;

  LabelMap() = default;
  LabelMap(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), labels(h * w, fill) {}
  std::uint8_t at(std::size_t i, std::size_t j) const { return labels[i * width + j]; }
  std::uint8_t& at(std::size_t i, std::size_t j) { return labels[i * width + j]; }
  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

/// Fraction of pixels that are neither background (0) nor ignored.
double foreground_ratio(const LabelMap& mask);

enum class Texture { kFlat, kNoise };

struct SceneConfig {
  std::size_t height = 128, width = 128;
  std::size_t num_classes = 6;  // background + 5 object classes
  std::size_t min_objects = 1, max_objects = 256;
  std::size_t min_size = 2, max_size = 8;
  double target_fg_ratio = 0.03;
  double fg_tolerance = 0.30;  // relative window around the target
  Texture texture = Texture::kNoise;
  std::uint64_t seed = 0;
};

struct SceneSample {
  Tensor<float> image;  // [3, H, W] in [0, 1]
  LabelMap mask;
};

/// Deterministic per (cfg.seed, index). Throws ConfigError when the
/// foreground window cannot be met in 100 attempts.
SceneSample synth_scene(const SceneConfig& cfg, std::uint64_t index);

struct Crop {
  Tensor<float> image;
  LabelMap mask;
  std::size_t y0 = 0, x0 = 0;
};

/// Window origins along one axis: multiples of `stride`, plus a final window
/// flush with the far border when the last one falls short.
std::vector<std::size_t> window_starts(std::size_t extent, std::size_t size, std::size_t stride);

std::vector<Crop> sliding_crop(const Tensor<float>& image, const LabelMap& mask, std::size_t size,
                               std::size_t stride);

/// Per-pixel majority vote over overlapping crop predictions; ties go to the
/// smaller class id.
LabelMap stitch_votes(const std::vector<Crop>& predictions, std::size_t height, std::size_t width,
                      std::size_t num_classes);

enum class AugmentOp { kIdentity, kHFlip, kVFlip, kRot90, kRot180, kRot270 };

/// Applies the same geometric transform to the image and the mask.
/// Rotation maps pixel (i, j) to (j, H-1-i) per quarter turn and needs a
/// square input.
SceneSample augment(const SceneSample& sample, AugmentOp op);

// ---- PFT1 tensor files ------------------------------------------------------

enum class DType : std::uint8_t { kF32 = 1, kF64 = 2, kU8 = 3 };

struct ByteTensor {
  Shape shape;
  std::vector<std::uint8_t> values;
};

using AnyTensor = std::variant<Tensor<float>, Tensor<double>, ByteTensor>;

void write_tensor(std::ostream& os, const AnyTensor& t);
AnyTensor read_tensor(std::istream& is);
void write_tensor(const std::filesystem::path& path, const AnyTensor& t);
AnyTensor read_tensor(const std::filesystem::path& path);

ByteTensor to_bytes(const LabelMap& mask);
LabelMap to_label_map(const ByteTensor& t);

/// Binary PGM of a label map, labels spread over 0..255 for viewing.
void write_pgm(const std::filesystem::path& path, const LabelMap& mask, std::size_t num_classes);
/// Binary PPM of a [3,H,W] image in [0,1].
void write_ppm(const std::filesystem::path& path, const Tensor<float>& image);
void write_ppm_rgb(const std::filesystem::path& path, std::size_t height, std::size_t width,
                   const std::vector<std::uint8_t>& rgb);

// ---- manifest ---------------------------------------------------------------

struct ManifestEntry {
  std::string image_path;  // relative to the manifest directory
  std::string mask_path;
  std::string split;  // train | val
};

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

/// Loads a manifest sample (image f32 [3,H,W], mask u8 [H,W]).
SceneSample load_sample(const std::filesystem::path& manifest_dir, const ManifestEntry& entry);

}  // namespace pfnet

#endif  // PFNET_DATA_HPP_
