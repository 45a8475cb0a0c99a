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
#include <omp.h>

#include <cstring>
#include <vector>

#include "pfnet/kernels.hpp"
#include "pfnet/random.hpp"

using namespace pfnet;
using namespace pfnet::kernels;

namespace {

template <typename T>
std::vector<T> random_vec(std::size_t n, Rng& rng) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.uniform(-1, 1));
  return v;
}

template <typename T>
bool same_bytes(const std::vector<T>& a, const std::vector<T>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

class ThreadScope {
 public:
  explicit ThreadScope(int n) : saved_(omp_get_max_threads()) { omp_set_num_threads(n); }
  ~ThreadScope() { omp_set_num_threads(saved_); }

 private:
  int saved_;
};

template <typename T>
void gemm_matches_reference(int threads) {
  ThreadScope scope(threads);
  Rng rng(1234 + static_cast<std::uint64_t>(threads));
  for (int it = 0; it < 400; ++it) {
    std::size_t m = 1 + rng.below(40), n = 1 + rng.below(90), k = 1 + rng.below(300);
    if (it % 10 == 0) n = 1 + rng.below(1100);  // crosses the column block
    if (it % 13 == 0) k = 256 + rng.below(300);  // crosses the depth block
    const Op oa = rng.below(2) ? Op::kTranspose : Op::kNone;
    const Op ob = rng.below(2) ? Op::kTranspose : Op::kNone;
    const bool acc = rng.below(2) == 1;
    const auto a = random_vec<T>(m * k, rng), b = random_vec<T>(k * n, rng);
    auto c = random_vec<T>(m * n, rng);
    auto ref = c;
    gemm(oa, ob, m, n, k, a.data(), b.data(), c.data(), acc);
    gemm_reference(oa, ob, m, n, k, a.data(), b.data(), ref.data(), acc);
    INFO("m=" << m << " n=" << n << " k=" << k << " acc=" << acc);
    REQUIRE(same_bytes(c, ref));
  }
}

}  // namespace

TEST_CASE("blocked gemm equals the naive loop bitwise (float, double, 1 and 4 threads)") {
  gemm_matches_reference<float>(1);
  gemm_matches_reference<float>(4);
  gemm_matches_reference<double>(1);
  gemm_matches_reference<double>(4);
}

TEST_CASE("gemm with k = 0 zeroes or keeps the output") {
  std::vector<float> c{1, 2, 3, 4};
  gemm<float>(Op::kNone, Op::kNone, 2, 2, 0, nullptr, nullptr, c.data(), true);
  CHECK(c == std::vector<float>{1, 2, 3, 4});
  gemm<float>(Op::kNone, Op::kNone, 2, 2, 0, nullptr, nullptr, c.data(), false);
  CHECK(c == std::vector<float>{0, 0, 0, 0});
}

TEST_CASE("im2col and col2im_add are adjoint") {
  Rng rng(5);
  for (const ConvGeometry g : {ConvGeometry{3, 7, 6, 3, 3, 1, 1}, ConvGeometry{2, 8, 9, 3, 3, 2, 1},
                               ConvGeometry{4, 5, 5, 1, 1, 1, 0}, ConvGeometry{1, 4, 4, 3, 3, 2, 0}}) {
    const auto x = random_vec<double>(g.channels * g.height * g.width, rng);
    const auto c = random_vec<double>(g.col_rows() * g.col_cols(), rng);
    std::vector<double> col(c.size()), back(x.size(), 0.0);
    im2col(g, x.data(), col.data());
    col2im_add(g, c.data(), back.data());
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < c.size(); ++i) lhs += col[i] * c[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * back[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("conv2d via im2col + gemm matches direct convolution") {
  Rng rng(9);
  for (int threads : {1, 4}) {
    ThreadScope scope(threads);
    for (const ConvGeometry g : {ConvGeometry{3, 16, 16, 3, 3, 2, 1}, ConvGeometry{8, 9, 7, 3, 3, 1, 1},
                                 ConvGeometry{16, 4, 4, 1, 1, 1, 0}}) {
      const std::size_t batch = 2, cout = 5;
      const auto x = random_vec<double>(batch * g.channels * g.height * g.width, rng);
      const auto w = random_vec<double>(cout * g.col_rows(), rng);
      const auto b = random_vec<double>(cout, rng);
      std::vector<double> y(batch * cout * g.out_h() * g.out_w()), ref(y.size());
      conv2d_gemm(g, batch, cout, x.data(), w.data(), b.data(), y.data());
      conv2d_reference(g, batch, cout, x.data(), w.data(), b.data(), ref.data());
      double err = 0;
      for (std::size_t i = 0; i < y.size(); ++i) err = std::max(err, std::abs(y[i] - ref[i]));
      CHECK(err < 1e-12);
    }
  }
}

TEST_CASE("conv2d_gemm is bitwise independent of the thread count") {
  Rng rng(11);
  const ConvGeometry g{16, 32, 32, 3, 3, 1, 1};
  const std::size_t batch = 3, cout = 24;
  const auto x = random_vec<float>(batch * g.channels * g.height * g.width, rng);
  const auto w = random_vec<float>(cout * g.col_rows(), rng);
  const auto b = random_vec<float>(cout, rng);
  std::vector<float> y1(batch * cout * g.out_h() * g.out_w()), y4(y1.size());
  {
    ThreadScope scope(1);
    conv2d_gemm(g, batch, cout, x.data(), w.data(), b.data(), y1.data());
  }
  {
    ThreadScope scope(4);
    conv2d_gemm(g, batch, cout, x.data(), w.data(), b.data(), y4.data());
  }
  CHECK(same_bytes(y1, y4));
}
