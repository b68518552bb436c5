// Serial reference vs OpenMP kernels. Arguments: d (assets incl. factor), n.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "hicov/bootstrap.hpp"
#include "hicov/estimators.hpp"
#include "hicov/mtest.hpp"

using namespace hicov;

namespace {

IncrementMatrix increments(int d, int n) {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> z(0.0, 0.05);
  RowMatrix dy(d, n);
  for (int h = 0; h < n; ++h) {
    const double f = z(rng);
    for (int a = 0; a < d; ++a) dy(a, h) = (a + 1 < d ? 0.8 * f : f) + (a + 1 < d ? z(rng) : 0.0);
  }
  return IncrementMatrix(std::move(dy));
}

Exec exec_of(const benchmark::State& s) { return s.range(2) == 0 ? Exec::kSerial : Exec::kParallel; }

void BM_RealizedCov(benchmark::State& state) {
  const auto inc = increments(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(realized_cov(inc, exec_of(state)));
}

void BM_PairStats(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const auto inc = increments(d, static_cast<int>(state.range(1)));
  const auto pairs = pairwise_partition(d - 1).flattened();
  for (auto _ : state) benchmark::DoNotOptimize(pair_stats(inc, pairs, nullptr, StatMode::kFactor, exec_of(state)));
}

void BM_Bootstrap(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const auto inc = increments(d, static_cast<int>(state.range(1)));
  const RealizedCov rc = realized_cov(inc);
  const auto part = pairwise_partition(d - 1);
  const auto stats = pair_stats(inc, part.flattened());
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        bootstrap_group_maxima(inc, rc, part, stats, 199, StreamKey(1), StatMode::kFactor, exec_of(state)));
  }
}

}  // namespace

// Third argument: 0 serial, 1 parallel.
BENCHMARK(BM_RealizedCov)->Args({21, 390, 0})->Args({21, 390, 1})->Args({101, 390, 0})->Args({101, 390, 1});
BENCHMARK(BM_PairStats)->Args({21, 390, 0})->Args({21, 390, 1})->Args({101, 390, 0})->Args({101, 390, 1});
BENCHMARK(BM_Bootstrap)->Args({21, 195, 0})->Args({21, 195, 1})->Args({101, 390, 0})->Args({101, 390, 1})
    ->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
