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

// OpenMP kernels against their serial references.

#include <benchmark/benchmark.h>

#include <cstddef>
#include <random>
#include <vector>

#include "pfnet/kernels.hpp"

namespace {

using pfnet::kernels::ConvGeometry;
using pfnet::kernels::Op;

std::vector<float> random_vec(std::size_t n, unsigned seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(gen);
  return v;
}

template <bool kReference>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    if constexpr (kReference) {
      pfnet::kernels::gemm_reference(Op::kNone, Op::kNone, n, n, n, a.data(), b.data(), c.data());
    } else {
      pfnet::kernels::gemm(Op::kNone, Op::kNone, n, n, n, a.data(), b.data(), c.data());
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * 2 * n * n * n));
}

template <bool kReference>
void BM_Conv(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const ConvGeometry g{32, side, side, 3, 3, 1, 1};
  const std::size_t batch = 4, out = 32;
  const auto x = random_vec(batch * g.channels * side * side, 3);
  const auto w = random_vec(out * g.col_rows(), 4);
  const auto bias = random_vec(out, 5);
  std::vector<float> y(batch * out * g.out_h() * g.out_w());
  for (auto _ : state) {
    if constexpr (kReference) {
      pfnet::kernels::conv2d_reference(g, batch, out, x.data(), w.data(), bias.data(), y.data());
    } else {
      pfnet::kernels::conv2d_gemm(g, batch, out, x.data(), w.data(), bias.data(), y.data());
    }
    benchmark::DoNotOptimize(y.data());
  }
}

BENCHMARK(BM_Gemm<false>)->Name("gemm")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm_reference")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_Conv<false>)->Name("conv2d_gemm")->Arg(16)->Arg(32)->Arg(64);
BENCHMARK(BM_Conv<true>)->Name("conv2d_reference")->Arg(16)->Arg(32)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
