// SPDX-License-Identifier: Apache-2.0
// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "gridcast/data.hpp"
#include "gridcast/kernels.hpp"
#include "gridcast/network.hpp"
#include "gridcast/rng.hpp"
#include "gridcast/train.hpp"

namespace {

using namespace gridcast;

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

template <bool Parallel>
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::parallel::matmul(a, b, c, n, n, n);
    else
      kernels::serial::matmul(a, b, c, n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

template <bool Parallel>
void BM_SquaredDistances(benchmark::State& state) {
  const std::size_t q = 256, n = static_cast<std::size_t>(state.range(0)), d = 104;
  auto queries = random_values(q * d, 3), points = random_values(n * d, 4);
  std::vector<double> dist(q * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::parallel::squared_distances(queries, points, dist, q, n, d);
    else
      kernels::serial::squared_distances(queries, points, dist, q, n, d);
    benchmark::DoNotOptimize(dist.data());
  }
}

template <bool Parallel>
void BM_BatchGradient(benchmark::State& state) {
  Rng rng(5);
  NetworkConfig cfg;
  Network net = Network::build(cfg, rng);
  SupervisedSet set = make_windows(synth_generate(200, 6), cfg.window);
  std::vector<std::size_t> idx(static_cast<std::size_t>(state.range(0)));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (auto _ : state) {
    auto g = Parallel ? batch_gradient_parallel(net, set, idx, 1, 1) : batch_gradient_serial(net, set, idx, 1, 1);
    benchmark::DoNotOptimize(g.loss_sum);
  }
}

BENCHMARK(BM_Matmul<false>)->Arg(64)->Arg(256);
BENCHMARK(BM_Matmul<true>)->Arg(64)->Arg(256);
BENCHMARK(BM_SquaredDistances<false>)->Arg(1024)->Arg(4096);
BENCHMARK(BM_SquaredDistances<true>)->Arg(1024)->Arg(4096);
BENCHMARK(BM_BatchGradient<false>)->Arg(32);
BENCHMARK(BM_BatchGradient<true>)->Arg(32);

}  // namespace

BENCHMARK_MAIN();
