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

#include <doctest.h>

#include <cmath>
#include <sstream>

#include "metric_oracles.hpp"
#include "pfnet/errors.hpp"
#include "pfnet/metrics.hpp"

using namespace pfnet;

namespace {

ConfusionMatrix from_counts(std::size_t k, const std::vector<std::uint64_t>& counts) {
  ConfusionMatrix cm(k);
  for (std::size_t g = 0; g < k; ++g)
    for (std::size_t p = 0; p < k; ++p)
      if (counts[g * k + p]) cm.add(g, p, counts[g * k + p]);
  return cm;
}

LabelMap halves(std::size_t n, std::size_t split) {
  LabelMap m(n, n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = split; j < n; ++j) m.at(i, j) = 1;
  return m;
}

}  // namespace

TEST_SUITE("class scores") {
  TEST_CASE("perfect prediction") {
    Rng rng(1);
    const auto m = oracle::random_mask(rng, 16, 16, 4);
    ConfusionMatrix cm(4);
    cm.add(m, m);
    const auto iou = miou(cm), f1 = class_f1(cm);
    CHECK(iou.mean == 1.0);
    CHECK(f1.mean == 1.0);
    for (std::size_t c = 0; c < 4; ++c)
      if (iou.present[c]) CHECK(iou.per_class[c] == 1.0);
  }

  TEST_CASE("two-class hand example") {
    const auto cm = from_counts(2, {3, 1, 1, 3});
    const auto iou = miou(cm);
    CHECK(iou.per_class[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(iou.per_class[1] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(iou.mean == doctest::Approx(0.6).epsilon(1e-15));
    const auto f1 = class_f1(cm);
    CHECK(f1.per_class[0] == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(f1.per_class[1] == doctest::Approx(0.75).epsilon(1e-15));
    const auto wrong = class_f1(from_counts(2, {0, 4, 5, 0}));
    CHECK(wrong.per_class == std::vector<double>{0, 0});
    CHECK(wrong.mean == 0.0);
  }

  TEST_CASE("classes absent from both sides are excluded") {
    const auto s = miou(from_counts(3, {4, 0, 0, 0, 2, 0, 0, 0, 0}));
    CHECK(s.excluded == 1);
    CHECK_FALSE(s.present[2]);
    CHECK(s.mean == 1.0);
  }

  TEST_CASE("errors and ignore handling") {
    CHECK_THROWS_AS(miou(ConfusionMatrix(3)), ShapeError);
    CHECK_THROWS_AS(ConfusionMatrix(1), ConfigError);
    ConfusionMatrix cm(2);
    LabelMap gt(1, 2, 0), pred(1, 2, 1);
    gt.at(0, 1) = kIgnoreLabel;
    cm.add(gt, pred);
    CHECK(cm.total() == 1);
    CHECK(cm.at(0, 1) == 1);
    CHECK_THROWS_AS(cm.add(gt, LabelMap(2, 2, 0)), ShapeError);
    CHECK_THROWS_AS(cm.merge(ConfusionMatrix(3)), ShapeError);
  }

  TEST_CASE("random cases match brute-force counts; merging is additive") {
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t k = 2 + rng.below(4);
      ConfusionMatrix whole(k), streamed(k);
      std::vector<std::uint64_t> counts(k * k, 0);
      for (int part = 0; part < 3; ++part) {
        auto gt = oracle::random_mask(rng, 16, 16, k);
        if (part == 1) gt.labels[rng.below(256)] = kIgnoreLabel;
        const auto pred = oracle::random_mask(rng, 16, 16, k);
        ConfusionMatrix one(k);
        one.add(gt, pred);
        streamed.merge(one);
        whole.add(gt, pred);
        const auto c = oracle::confusion(gt, pred, k);
        for (std::size_t i = 0; i < c.size(); ++i) counts[i] += c[i];
      }
      CHECK(whole == streamed);
      for (std::size_t g = 0; g < k; ++g)
        for (std::size_t p = 0; p < k; ++p) CHECK(whole.at(g, p) == counts[g * k + p]);
      const auto iou = miou(whole), f1 = class_f1(whole);
      const auto oi = oracle::class_scores(counts, k, false), of = oracle::class_scores(counts, k, true);
      CHECK(iou.excluded == oi.excluded);
      CHECK(std::abs(iou.mean - oi.mean) < 1e-9);
      CHECK(std::abs(f1.mean - of.mean) < 1e-9);
      for (std::size_t c = 0; c < k; ++c) {
        CHECK(std::abs(iou.per_class[c] - oi.per_class[c]) < 1e-9);
        CHECK(std::abs(f1.per_class[c] - of.per_class[c]) < 1e-9);
        CHECK((iou.per_class[c] >= 0 && iou.per_class[c] <= 1));
      }
    }
  }
}

TEST_SUITE("boundary F1") {
  TEST_CASE("identical masks score one at every threshold") {
    Rng rng(3);
    const auto m = oracle::random_mask(rng, 16, 16, 3);
    for (double t : {1.0, 2.0, 3.0, 12.0}) CHECK(boundary_f1(m, m, t) == 1.0);
  }

  TEST_CASE("a two-pixel shift matches at three but not at one") {
    const auto gt = halves(16, 8), pred = halves(16, 10);
    CHECK(boundary_f1(pred, gt, 3) == 1.0);
    CHECK(boundary_f1(pred, gt, 2) == 1.0);
    CHECK(boundary_f1(pred, gt, 1) == 0.0);
  }

  TEST_CASE("empty boundaries agree vacuously; one empty side scores zero") {
    CHECK(boundary_f1(LabelMap(8, 8, 2), LabelMap(8, 8, 0), 1) == 1.0);
    CHECK(boundary_f1(halves(8, 4), LabelMap(8, 8, 0), 3) == 0.0);
    CHECK_THROWS_AS(boundary_f1(LabelMap(8, 8), LabelMap(8, 9), 1), ShapeError);
    CHECK_THROWS_AS(boundary_f1(LabelMap(8, 8), LabelMap(8, 8), 0.5), ConfigError);
  }

  TEST_CASE("boundary pixels mark the top/left side of each edge") {
    const auto b = boundary_pixels(halves(4, 2));
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) CHECK(b[i * 4 + j] == (j == 1 ? 1 : 0));
  }

  TEST_CASE("exact distance transform") {
    std::vector<std::uint8_t> m(5 * 7, 0);
    m[1 * 7 + 2] = 1;
    m[4 * 7 + 6] = 1;
    const auto d = squared_distance_transform(m, 5, 7);
    for (long i = 0; i < 5; ++i)
      for (long j = 0; j < 7; ++j) {
        const long a = (i - 1) * (i - 1) + (j - 2) * (j - 2), b = (i - 4) * (i - 4) + (j - 6) * (j - 6);
        CHECK(d[std::size_t(i * 7 + j)] == double(std::min(a, b)));
      }
  }

  TEST_CASE("random cases match the brute-force matcher; symmetric") {
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
      const auto gt = oracle::random_mask(rng, 16, 16, 3), pred = oracle::random_mask(rng, 16, 16, 3);
      for (double t : {1.0, 2.0, 3.0}) {
        const auto c = boundary_counts(pred, gt, t);
        const auto o = oracle::boundary(pred, gt, t);
        CHECK(c.pred_matched == o.pred_matched);
        CHECK(c.pred_total == o.pred_total);
        CHECK(c.gt_matched == o.gt_matched);
        CHECK(c.gt_total == o.gt_total);
        const double f = boundary_f1(pred, gt, t);
        CHECK(std::abs(f - oracle::boundary_f1(o)) < 1e-9);
        CHECK((f >= 0 && f <= 1));
        if (o.pred_total > 0 && o.gt_total > 0) CHECK(std::abs(f - boundary_f1(gt, pred, t)) < 1e-12);
      }
    }
  }

  TEST_CASE("merged counts pool matches") {
    BoundaryCounts a{1, 2, 3, 4}, b{5, 6, 7, 8};
    a.merge(b);
    CHECK(a.pred_matched == 6);
    CHECK(a.pred_total == 8);
    CHECK(a.gt_matched == 10);
    CHECK(a.gt_total == 12);
    CHECK(a.f1() == doctest::Approx(2 * 0.75 * (10.0 / 12) / (0.75 + 10.0 / 12)));
  }

  TEST_CASE("thresholds scale down with a floor of one pixel") {
    const std::vector<std::size_t> ref{12, 9, 5, 3};
    CHECK(scaled_thresholds(ref, 4) == std::vector<std::size_t>{3, 2, 1, 1});
    CHECK(scaled_thresholds(ref, 14) == std::vector<std::size_t>{1, 1, 1, 1});
    CHECK(scaled_thresholds(ref, 1) == ref);
    CHECK_THROWS_AS(scaled_thresholds(ref, 0), ConfigError);
  }
}

TEST_SUITE("foreground point ratio") {
  TEST_CASE("points inside a foreground rectangle score one") {
    LabelMap m(16, 16, 0);
    for (std::size_t i = 4; i < 8; ++i)
      for (std::size_t j = 2; j < 10; ++j) m.at(i, j) = 3;
    std::vector<NormalizedPoint> pts;
    for (std::size_t i = 4; i < 8; ++i) pts.push_back(cell_center(i, 5, 16, 16));
    CHECK(fg_sample_ratio(pts, m) == 1.0);
  }

  TEST_CASE("a full grid reproduces the pixel ratio") {
    Rng rng(5);
    const auto m = oracle::random_mask(rng, 16, 16, 3);
    std::vector<NormalizedPoint> pts;
    for (std::size_t i = 0; i < 16; ++i)
      for (std::size_t j = 0; j < 16; ++j) pts.push_back(cell_center(i, j, 16, 16));
    CHECK(fg_sample_ratio(pts, m) == doctest::Approx(foreground_ratio(m)).epsilon(1e-15));
  }

  TEST_CASE("duplicates count once; empty sets are errors") {
    LabelMap m(4, 4, 0);
    m.at(0, 0) = 1;
    const std::vector<NormalizedPoint> pts{{0.1, 0.1}, {0.2, 0.2}, {0.9, 0.9}};
    const auto c = fg_sample_counts(pts, m);
    CHECK(c.total == 2);
    CHECK(c.foreground == 1);
    CHECK_THROWS_AS(fg_sample_ratio(std::vector<NormalizedPoint>{}, m), ShapeError);
  }

  TEST_CASE("random point sets match the brute-force count") {
    Rng rng(6);
    for (int trial = 0; trial < 100; ++trial) {
      const auto m = oracle::random_mask(rng, 16, 16, 3);
      std::vector<NormalizedPoint> pts(1 + rng.below(80));
      for (auto& p : pts) p = {rng.uniform(0, 1), rng.uniform(0, 1)};
      const auto c = fg_sample_counts(pts, m);
      const auto o = oracle::fg_points(pts, m);
      CHECK(c.foreground == o.foreground);
      CHECK(c.total == o.total);
    }
  }
}

TEST_SUITE("reports") {
  TEST_CASE("csv and table carry every metric") {
    const auto cm = from_counts(2, {3, 1, 1, 3});
    MetricReport r;
    r.num_classes = 2;
    r.iou = miou(cm);
    r.f1 = class_f1(cm);
    r.reference_thresholds = {12, 3};
    r.thresholds = {3, 1};
    r.boundary_f1 = {0.5, 0.25};
    r.fg_sample_ratio = 0.1;
    r.fg_pixel_ratio = 0.03;
    std::ostringstream csv, table;
    write_report_csv(csv, r);
    write_report_table(table, r);
    CHECK(csv.str().find("section,key,value") == 0);
    for (const char* key : {"miou", "boundary_f1", "fg_sample_ratio", "fg_pixel_ratio"}) {
      CAPTURE(key);
      CHECK(csv.str().find(key) != std::string::npos);
    }
    CHECK(table.str().find("mean          60.00    75.00") != std::string::npos);
    CHECK(table.str().find("F1(12px)") != std::string::npos);
  }
}
