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
#include <cstring>

#include "pfnet/autodiff.hpp"
#include "pfnet/errors.hpp"
#include "pfnet/ops.hpp"
#include "test_util.hpp"

using namespace pfnet;
using pfnet::testing::max_abs_diff;
using pfnet::testing::tensor;

TEST_SUITE("tensor") {
  TEST_CASE("create fills and validates shapes") {
    const auto z = Tensor<double>::zeros({2, 2});
    CHECK(z.to_vector() == std::vector<double>{0, 0, 0, 0});
    CHECK(Tensor<double>::ones({3}).to_vector() == std::vector<double>{1, 1, 1});
    CHECK_THROWS_AS(Tensor<double>({2, 0}, 0.0), ShapeError);
    CHECK_THROWS_AS(Tensor<double>(Shape{}, 0.0), ShapeError);
    CHECK_THROWS_AS(Tensor<double>({2}, std::vector<double>{1, 2, 3}), ShapeError);
  }

  TEST_CASE("seeded fill is reproducible byte for byte") {
    const auto a = Tensor<float>::uniform({4}, 7);
    const auto b = Tensor<float>::uniform({4}, 7);
    CHECK(a.bitwise_equal(b));
    CHECK_FALSE(a.bitwise_equal(Tensor<float>::uniform({4}, 8)));
    for (float v : a.values()) CHECK((v >= -1.0f && v < 1.0f));
  }

  TEST_CASE("reshape keeps data and rejects size changes") {
    const auto t = Tensor<double>::uniform({2, 3}, 1);
    CHECK(t.reshaped({3, 2}).values().data() == t.values().data());
    CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
  }
}

TEST_SUITE("elementwise") {
  TEST_CASE("unary examples") {
    Tape<double> tape;
    const auto x = tape.constant(tensor<double>({3}, {0, -3, 2}));
    const auto s = sigmoid(x).value();
    CHECK(s[0] == 0.5);
    CHECK(s[2] == doctest::Approx(0.8807970779778823).epsilon(1e-15));  // 1/(1+e^-2)
    CHECK(relu(x).value()[1] == 0.0);
    CHECK(negate(x).value()[2] == -2.0);
    CHECK(exponential(x).value()[2] == doctest::Approx(7.38905609893065).epsilon(1e-14));
  }

  TEST_CASE("sigmoid stays strictly inside (0, 1)") {
    Tape<double> tape;
    const auto s = sigmoid(tape.constant(tensor<double>({2}, {-800, 800}))).value();
    CHECK(s[0] > 0.0);
    CHECK(s[1] < 1.0);
  }

  TEST_CASE("exp overflow is a numeric error") {
    Tape<double> tape;
    CHECK_THROWS_AS(exponential(tape.constant(tensor<double>({1}, {1000}))), NumericError);
  }

  TEST_CASE("binary examples and broadcast rules") {
    Tape<double> tape;
    const auto a = tape.constant(tensor<double>({2}, {1, 2}));
    const auto b = tape.constant(tensor<double>({2}, {3, 4}));
    CHECK(add(a, b).value().to_vector() == std::vector<double>{4, 6});
    const auto x = tape.constant(Tensor<double>::uniform({2, 3, 2, 2}, 3));
    for (double v : sub(x, x).value().values()) CHECK(v == 0.0);

    // Saliency-map broadcast: every channel scaled by M.
    const auto f = Tensor<double>::uniform({1, 2, 2, 2}, 4);
    const auto m = tensor<double>({1, 1, 2, 2}, {0.5, 2, -1, 3});
    const auto y = mul(tape.constant(f), tape.constant(m)).value();
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t p = 0; p < 4; ++p) CHECK(y[c * 4 + p] == f[c * 4 + p] * m[p]);
    }
    // Per-channel broadcast.
    const auto pc = tensor<double>({1, 2, 1, 1}, {10, 20});
    const auto z = add(tape.constant(f), tape.constant(pc)).value();
    CHECK(z[0] == f[0] + 10);
    CHECK(z[7] == f[7] + 20);
    CHECK_THROWS_AS(add(x, tape.constant(Tensor<double>::zeros({2, 3, 2, 1}))), ShapeError);
  }
}

TEST_SUITE("linear algebra") {
  TEST_CASE("matmul examples") {
    Tape<double> tape;
    const auto a = tape.constant(Tensor<double>::uniform({2, 3}, 5));
    const auto eye = tape.constant(tensor<double>({2, 2}, {1, 0, 0, 1}));
    CHECK(matmul(eye, a).value().bitwise_equal(a.value()));
    const auto r = matmul(tape.constant(tensor<double>({1, 2}, {1, 2})), tape.constant(tensor<double>({2, 1}, {3, 4})));
    CHECK(r.value().to_vector() == std::vector<double>{11});
    for (double v : matmul(tape.constant(Tensor<double>::zeros({2, 2})), a).value().values()) CHECK(v == 0.0);
    CHECK_THROWS_AS(matmul(a, a), ShapeError);
  }

  TEST_CASE("transpose") {
    Tape<double> tape;
    const auto t = transpose(tape.constant(tensor<double>({2, 3}, {1, 2, 3, 4, 5, 6}))).value();
    CHECK(t.shape() == Shape{3, 2});
    CHECK(t.to_vector() == std::vector<double>{1, 4, 2, 5, 3, 6});
  }

  TEST_CASE("softmax examples") {
    Tape<double> tape;
    CHECK(softmax_rows(tape.constant(tensor<double>({1, 2}, {0, 0}))).value().to_vector() ==
          std::vector<double>{0.5, 0.5});
    const auto c = softmax_rows(tape.constant(tensor<double>({1, 3}, {7.5, 7.5, 7.5}))).value();
    for (double v : c.values()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));
    const auto s = softmax_rows(tape.constant(tensor<double>({1, 2}, {1, 2}))).value();
    CHECK(s[0] == doctest::Approx(0.2689414213699951).epsilon(1e-14));
    CHECK(s[1] == doctest::Approx(0.7310585786300049).epsilon(1e-14));
  }

  TEST_CASE("softmax rows sum to one and ignore row shifts") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      Tape<double> tape;
      const auto x = Tensor<double>::uniform({5, 17}, seed, -30, 30);
      std::vector<double> shifted = x.to_vector();
      for (std::size_t r = 0; r < 5; ++r) {
        for (std::size_t c = 0; c < 17; ++c) shifted[r * 17 + c] += 3.25 * static_cast<double>(r + 1);
      }
      const auto s = softmax_rows(tape.constant(x)).value();
      const auto t = softmax_rows(tape.constant(tensor<double>({5, 17}, shifted))).value();
      for (std::size_t r = 0; r < 5; ++r) {
        double sum = 0;
        for (std::size_t c = 0; c < 17; ++c) {
          CHECK(s[r * 17 + c] >= 0.0);
          sum += s[r * 17 + c];
        }
        CHECK(std::abs(sum - 1.0) < 1e-6);
      }
      CHECK(max_abs_diff(s, t) < 1e-9);
    }
  }

  TEST_CASE("concat, reshape, sum, mean") {
    Tape<double> tape;
    const auto a = Tensor<double>::uniform({2, 2, 3, 3}, 1);
    const auto b = Tensor<double>::uniform({2, 3, 3, 3}, 2);
    const auto c = concat_channels({tape.constant(a), tape.constant(b)}).value();
    CHECK(c.shape() == Shape{2, 5, 3, 3});
    for (std::size_t n = 0; n < 2; ++n) {
      for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) CHECK(c.at(n, 2, i, j) == b.at(n, 0, i, j));
      }
    }
    CHECK(concat_channels({tape.constant(a)}).value().bitwise_equal(a));
    CHECK_THROWS_AS(concat_channels({tape.constant(a), tape.constant(Tensor<double>::zeros({2, 1, 2, 3}))}), ShapeError);
    const auto v = tape.constant(tensor<double>({2, 2}, {1, 2, 3, 4}));
    CHECK(sum(v).value()[0] == 10.0);
    CHECK(mean(v).value()[0] == 2.5);
    CHECK(reshape(v, Shape{4}).value().shape() == Shape{4});
  }
}

TEST_SUITE("reverse accumulation") {
  TEST_CASE("sum gives ones, sum of squares gives 2x") {
    Tape<double> tape;
    const auto xv = Tensor<double>::uniform({3, 4}, 9);
    const auto x = tape.leaf(xv);
    const auto gx = tape.backward(sum(x)).of(x);
    for (double v : gx.values()) CHECK(v == 1.0);

    Tape<double> t2;
    const auto y = t2.leaf(xv);
    const auto g2 = t2.backward(sum(mul(y, y)));
    for (std::size_t i = 0; i < xv.numel(); ++i) CHECK(g2.of(y)[i] == 2.0 * xv[i]);
  }

  TEST_CASE("fan-out accumulates additively") {
    Tape<double> tape;
    const auto x = tape.leaf(tensor<double>({2}, {1.5, -2}));
    const auto loss = sum(add(add(x, x), mul(x, x)));  // 2x + x^2
    const auto g = tape.backward(loss).of(x);
    CHECK(g[0] == 2.0 + 3.0);
    CHECK(g[1] == 2.0 - 4.0);
  }

  TEST_CASE("unreached leaves get zeros; constants get nothing") {
    Tape<double> tape;
    const auto x = tape.leaf(Tensor<double>::ones({2}));
    const auto unused = tape.leaf(Tensor<double>::ones({3}));
    const auto c = tape.constant(Tensor<double>::ones({2}));
    const auto g = tape.backward(sum(mul(x, c)));
    CHECK_FALSE(g.reached(unused));
    const auto gu = g.of(unused);
    for (double v : gu.values()) CHECK(v == 0.0);
    CHECK(g.of(unused).shape() == Shape{3});
  }

  TEST_CASE("errors: non-scalar loss, consumed tape, foreign operands") {
    Tape<double> tape;
    const auto x = tape.leaf(Tensor<double>::ones({2}));
    CHECK_THROWS_AS(tape.backward(x), ShapeError);
    const auto loss = sum(x);
    tape.backward(loss);
    CHECK(tape.consumed());
    CHECK_THROWS_AS(tape.backward(loss), ShapeError);
    CHECK_THROWS_AS(sum(x), ShapeError);
    Tape<double> other;
    const auto y = other.leaf(Tensor<double>::ones({2}));
    Tape<double> third;
    const auto z = third.leaf(Tensor<double>::ones({2}));
    CHECK_THROWS_AS(add(y, z), ShapeError);
  }

  TEST_CASE("non-finite leaves are rejected") {
    Tape<double> tape;
    CHECK_THROWS_AS(tape.leaf(tensor<double>({1}, {std::nan("")})), NumericError);
  }

  TEST_CASE("forward values and gradients are bitwise reproducible") {
    auto run = [] {
      Tape<float> tape;
      const auto a = tape.leaf(Tensor<float>::uniform({6, 9}, 21));
      const auto b = tape.leaf(Tensor<float>::uniform({9, 5}, 22));
      const auto y = softmax_rows(matmul(a, b));
      const auto g = tape.backward(sum(mul(y, y)));
      return std::pair{y.value(), g.of(a)};
    };
    const auto [y1, g1] = run();
    const auto [y2, g2] = run();
    CHECK(y1.bitwise_equal(y2));
    CHECK(g1.bitwise_equal(g2));
  }
}
