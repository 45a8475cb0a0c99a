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

// Segmentation metrics: confusion-matrix IoU/F1, tolerance-matched boundary
// F1, and the foreground share of PointFlow-selected points.
#ifndef PFNET_METRICS_HPP_
#define PFNET_METRICS_HPP_

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "pfnet/data.hpp"
#include "pfnet/nn.hpp"

namespace pfnet {

/// K x K counts, rows = ground truth, columns = prediction. Ground-truth
/// pixels labelled kIgnoreLabel are skipped.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);

  void add(const LabelMap& gt, const LabelMap& pred);
  void add(std::size_t gt, std::size_t pred, std::uint64_t count = 1);
  void merge(const ConfusionMatrix& other);

  std::size_t num_classes() const { return k_; }
  std::uint64_t at(std::size_t gt, std::size_t pred) const { return counts_[gt * k_ + pred]; }
  std::uint64_t total() const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

struct ClassScores {
  std::vector<double> per_class;  // NaN-free; 0 for excluded classes
  std::vector<bool> present;      // false when the class has an empty union
  double mean = 0;
  std::size_t excluded = 0;
};

/// IoU_k = tp / (tp + fp + fn); classes with an empty union are excluded.
ClassScores miou(const ConfusionMatrix& cm);
/// F1_k = 2tp / (2tp + fp + fn) with the same exclusion rule.
ClassScores class_f1(const ConfusionMatrix& cm);

/// Boundary pixels: those whose right or bottom neighbor carries a different
/// label, so a label edge is marked once, on its top/left side.
std::vector<std::uint8_t> boundary_pixels(const LabelMap& mask);

/// Exact squared Euclidean distance from every pixel to the nearest set pixel
/// of `mask` (h x w); +inf-like sentinel when the mask is empty.
std::vector<double> squared_distance_transform(std::span<const std::uint8_t> mask, std::size_t h,
                                               std::size_t w);

/// Mergeable boundary match counts for one threshold.
struct BoundaryCounts {
  std::uint64_t pred_matched = 0, pred_total = 0;
  std::uint64_t gt_matched = 0, gt_total = 0;

  void merge(const BoundaryCounts& o);
  /// Both sets empty: 1 (vacuous agreement). Otherwise 2PR/(P+R), 0 if P+R=0.
  double f1() const;
};

BoundaryCounts boundary_counts(const LabelMap& pred, const LabelMap& gt, double threshold_px);
double boundary_f1(const LabelMap& pred, const LabelMap& gt, double threshold_px);

/// Thresholds scaled to desk resolution: max(1, floor(t / divisor)).
std::vector<std::size_t> scaled_thresholds(std::span<const std::size_t> reference, std::size_t divisor);

/// Foreground hits of a point set after deduplication by full-resolution cell.
struct PointCounts {
  std::uint64_t foreground = 0, total = 0;
  void merge(const PointCounts& o) {
    foreground += o.foreground;
    total += o.total;
  }
  double ratio() const;  // throws on an empty set
};

/// Maps every point onto the mask's pixel grid, drops duplicates, and counts
/// the cells whose label is foreground (non-zero, not ignored).
PointCounts fg_sample_counts(std::span<const NormalizedPoint> points, const LabelMap& mask);
double fg_sample_ratio(std::span<const NormalizedPoint> points, const LabelMap& mask);

struct MetricReport {
  std::size_t num_classes = 0;
  ClassScores iou, f1;
  std::vector<std::size_t> reference_thresholds;  // e.g. 12, 9, 5, 3
  std::vector<std::size_t> thresholds;            // desk-scale pixels
  std::vector<double> boundary_f1;
  std::optional<double> fg_sample_ratio;
  std::optional<double> fg_pixel_ratio;
};

void write_report_csv(std::ostream& os, const MetricReport& r);
void write_report_table(std::ostream& os, const MetricReport& r);

}  // namespace pfnet

#endif  // PFNET_METRICS_HPP_
