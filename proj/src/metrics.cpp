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

#include "pfnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "pfnet/errors.hpp"

namespace pfnet {
namespace {

constexpr double kFar = 1e20;

void require_same(const LabelMap& a, const LabelMap& b, const char* what) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError(std::string(what) + ": masks differ in size (" + std::to_string(a.height) + "x" +
                     std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                     std::to_string(b.width) + ")");
  }
}

// 1-D lower envelope of parabolas (Felzenszwalb & Huttenlocher).
void edt_1d(const double* f, std::size_t n, std::size_t stride, double* out, std::vector<std::size_t>& v,
            std::vector<double>& z) {
  v.assign(n, 0);
  z.assign(n + 1, 0);
  std::size_t k = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (std::size_t q = 1; q < n; ++q) {
    const double fq = f[q * stride] + static_cast<double>(q * q);
    double s = 0;
    while (true) {
      const std::size_t p = v[k];
      s = (fq - (f[p * stride] + static_cast<double>(p * p))) / (2.0 * static_cast<double>(q - p));
      if (s > z[k] || k == 0) break;
      --k;
    }
    if (s <= z[k]) {  // k == 0 and the new parabola dominates
      v[0] = q;
      z[1] = std::numeric_limits<double>::infinity();
      continue;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    const double d = static_cast<double>(q) - static_cast<double>(v[k]);
    out[q * stride] = d * d + f[v[k] * stride];
  }
}

ClassScores summarize(const ConfusionMatrix& cm, bool f1) {
  const std::size_t k = cm.num_classes();
  if (cm.total() == 0) throw ShapeError("metrics: empty confusion matrix");
  ClassScores s;
  s.per_class.assign(k, 0.0);
  s.present.assign(k, false);
  double sum = 0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row += cm.at(c, j);
      col += cm.at(j, c);
    }
    const std::uint64_t tp = cm.at(c, c);
    const std::uint64_t fn = row - tp, fp = col - tp;
    if (tp + fp + fn == 0) {
      ++s.excluded;
      continue;
    }
    const double num = f1 ? 2.0 * static_cast<double>(tp) : static_cast<double>(tp);
    const double den = f1 ? static_cast<double>(2 * tp + fp + fn) : static_cast<double>(tp + fp + fn);
    s.per_class[c] = num / den;
    s.present[c] = true;
    sum += s.per_class[c];
    ++used;
  }
  s.mean = sum / static_cast<double>(used);
  return s;
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes) : k_(num_classes), counts_(num_classes * num_classes, 0) {
  if (num_classes < 2) throw ConfigError("confusion matrix needs at least 2 classes");
}

void ConfusionMatrix::add(std::size_t gt, std::size_t pred, std::uint64_t count) {
  if (gt >= k_ || pred >= k_) {
    throw ShapeError("label out of range: gt " + std::to_string(gt) + ", pred " + std::to_string(pred) +
                     " with " + std::to_string(k_) + " classes");
  }
  counts_[gt * k_ + pred] += count;
}

void ConfusionMatrix::add(const LabelMap& gt, const LabelMap& pred) {
  require_same(gt, pred, "confusion matrix");
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    if (gt.labels[i] == kIgnoreLabel) continue;
    add(gt.labels[i], pred.labels[i]);
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw ShapeError("cannot merge confusion matrices of different class counts");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (std::uint64_t c : counts_) t += c;
  return t;
}

ClassScores miou(const ConfusionMatrix& cm) { return summarize(cm, false); }
ClassScores class_f1(const ConfusionMatrix& cm) { return summarize(cm, true); }

std::vector<std::uint8_t> boundary_pixels(const LabelMap& mask) {
  const std::size_t h = mask.height, w = mask.width;
  std::vector<std::uint8_t> b(h * w, 0);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const std::uint8_t l = mask.at(i, j);
      b[i * w + j] = ((j + 1 < w && mask.at(i, j + 1) != l) || (i + 1 < h && mask.at(i + 1, j) != l)) ? 1 : 0;
    }
  }
  return b;
}

std::vector<double> squared_distance_transform(std::span<const std::uint8_t> mask, std::size_t h,
                                               std::size_t w) {
  if (mask.size() != h * w) throw ShapeError("distance transform: mask size mismatch");
  std::vector<double> f(h * w), tmp(h * w);
  for (std::size_t i = 0; i < h * w; ++i) f[i] = mask[i] ? 0.0 : kFar;
  std::vector<std::size_t> v;
  std::vector<double> z;
  for (std::size_t j = 0; j < w; ++j) edt_1d(f.data() + j, h, w, tmp.data() + j, v, z);
  for (std::size_t i = 0; i < h; ++i) edt_1d(tmp.data() + i * w, w, 1, f.data() + i * w, v, z);
  return f;
}

void BoundaryCounts::merge(const BoundaryCounts& o) {
  pred_matched += o.pred_matched;
  pred_total += o.pred_total;
  gt_matched += o.gt_matched;
  gt_total += o.gt_total;
}

double BoundaryCounts::f1() const {
  if (pred_total == 0 && gt_total == 0) return 1.0;
  const double p = pred_total == 0 ? 0.0 : static_cast<double>(pred_matched) / static_cast<double>(pred_total);
  const double r = gt_total == 0 ? 0.0 : static_cast<double>(gt_matched) / static_cast<double>(gt_total);
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

BoundaryCounts boundary_counts(const LabelMap& pred, const LabelMap& gt, double threshold_px) {
  require_same(pred, gt, "boundary_f1");
  if (!(threshold_px >= 1)) throw ConfigError("boundary threshold must be >= 1 px");
  const std::size_t h = gt.height, w = gt.width;
  const auto pb = boundary_pixels(pred);
  const auto gb = boundary_pixels(gt);
  const auto dist_to_gt = squared_distance_transform(gb, h, w);
  const auto dist_to_pred = squared_distance_transform(pb, h, w);
  const double t2 = threshold_px * threshold_px;
  BoundaryCounts c;
  for (std::size_t i = 0; i < h * w; ++i) {
    if (pb[i]) {
      ++c.pred_total;
      if (dist_to_gt[i] <= t2) ++c.pred_matched;
    }
    if (gb[i]) {
      ++c.gt_total;
      if (dist_to_pred[i] <= t2) ++c.gt_matched;
    }
  }
  return c;
}

double boundary_f1(const LabelMap& pred, const LabelMap& gt, double threshold_px) {
  return boundary_counts(pred, gt, threshold_px).f1();
}

std::vector<std::size_t> scaled_thresholds(std::span<const std::size_t> reference, std::size_t divisor) {
  if (divisor == 0) throw ConfigError("threshold divisor must be >= 1");
  std::vector<std::size_t> out;
  for (std::size_t t : reference) out.push_back(std::max<std::size_t>(1, t / divisor));
  return out;
}

double PointCounts::ratio() const {
  if (total == 0) throw ShapeError("fg_sample_ratio: empty point set");
  return static_cast<double>(foreground) / static_cast<double>(total);
}

PointCounts fg_sample_counts(std::span<const NormalizedPoint> points, const LabelMap& mask) {
  std::set<std::pair<std::size_t, std::size_t>> cells;
  for (const NormalizedPoint& p : points) cells.insert(cell_of(p, mask.height, mask.width));
  PointCounts c;
  for (const auto& [i, j] : cells) {
    const std::uint8_t l = mask.at(i, j);
    if (l == kIgnoreLabel) continue;
    ++c.total;
    if (l != 0) ++c.foreground;
  }
  return c;
}

double fg_sample_ratio(std::span<const NormalizedPoint> points, const LabelMap& mask) {
  return fg_sample_counts(points, mask).ratio();
}

void write_report_csv(std::ostream& os, const MetricReport& r) {
  os << std::setprecision(10);
  os << "section,key,value\n";
  for (std::size_t c = 0; c < r.num_classes; ++c) {
    os << "iou,class" << c << ',' << (r.iou.present[c] ? std::to_string(r.iou.per_class[c]) : "") << '\n';
  }
  for (std::size_t c = 0; c < r.num_classes; ++c) {
    os << "f1,class" << c << ',' << (r.f1.present[c] ? std::to_string(r.f1.per_class[c]) : "") << '\n';
  }
  os << "summary,miou," << r.iou.mean << '\n';
  os << "summary,mean_f1," << r.f1.mean << '\n';
  os << "summary,excluded_classes," << r.iou.excluded << '\n';
  for (std::size_t i = 0; i < r.thresholds.size(); ++i) {
    os << "boundary_f1," << r.reference_thresholds[i] << "px@" << r.thresholds[i] << "px," << r.boundary_f1[i]
       << '\n';
  }
  if (r.fg_sample_ratio) os << "points,fg_sample_ratio," << *r.fg_sample_ratio << '\n';
  if (r.fg_pixel_ratio) os << "points,fg_pixel_ratio," << *r.fg_pixel_ratio << '\n';
}

void write_report_table(std::ostream& os, const MetricReport& r) {
  auto pct = [](double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << 100.0 * v;
    return s.str();
  };
  os << std::left << std::setw(10) << "class" << std::right << std::setw(9) << "IoU" << std::setw(9) << "F1"
     << '\n';
  for (std::size_t c = 0; c < r.num_classes; ++c) {
    os << std::left << std::setw(10) << ("class" + std::to_string(c)) << std::right << std::setw(9)
       << (r.iou.present[c] ? pct(r.iou.per_class[c]) : "-") << std::setw(9)
       << (r.f1.present[c] ? pct(r.f1.per_class[c]) : "-") << '\n';
  }
  os << std::left << std::setw(10) << "mean" << std::right << std::setw(9) << pct(r.iou.mean) << std::setw(9)
     << pct(r.f1.mean) << '\n';
  if (r.iou.excluded > 0) os << "(" << r.iou.excluded << " class(es) absent from gt and prediction)\n";
  if (!r.thresholds.empty()) {
    os << '\n';
    for (std::size_t i = 0; i < r.thresholds.size(); ++i) {
      os << std::setw(12) << ("F1(" + std::to_string(r.reference_thresholds[i]) + "px)");
    }
    os << '\n';
    for (std::size_t i = 0; i < r.thresholds.size(); ++i) {
      os << std::setw(12) << ("@" + std::to_string(r.thresholds[i]) + "px");
    }
    os << '\n';
    for (double v : r.boundary_f1) os << std::setw(12) << pct(v);
    os << '\n';
  }
  if (r.fg_sample_ratio) {
    os << "\nforeground sampled points: " << pct(*r.fg_sample_ratio) << "%";
    if (r.fg_pixel_ratio) os << " (foreground pixels: " << pct(*r.fg_pixel_ratio) << "%)";
    os << '\n';
  }
}

}  // namespace pfnet
