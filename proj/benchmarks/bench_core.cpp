#include <benchmark/benchmark.h>

#include "sddelab/grid.hpp"
#include "sddelab/paths.hpp"
#include "sddelab/rng.hpp"

using namespace sddelab;

static void BM_PhiloxGaussian(benchmark::State& state) {
  std::uint64_t p = 0;
  double acc = 0.0;
  for (auto _ : state) {
    acc += gaussian(42, p++, 17, 0);
  }
  benchmark::DoNotOptimize(acc);
}
BENCHMARK(BM_PhiloxGaussian);

static void BM_BrownianIncrement(benchmark::State& state) {
  const TimeGrid g = build_grid(1.0, 0.25, 64);
  const BrownianBundle b(g, 1 << 20, 1, 7);
  int p = 0, k = 0;
  double acc = 0.0;
  for (auto _ : state) {
    acc += b.dW(p, k, 0);
    if (++k == g.n_steps) {
      k = 0;
      ++p;
    }
  }
  benchmark::DoNotOptimize(acc);
}
BENCHMARK(BM_BrownianIncrement);

static void BM_DistributedDelay(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  const TimeGrid g = build_grid(1.0, 0.25, m);
  PathMatrix x(1, -g.pre_steps, g.n_steps, 1);
  for (int k = -g.pre_steps; k <= g.n_steps; ++k) x.at(0, k, 0) = std::sin(0.1 * k);
  double acc = 0.0;
  for (auto _ : state) {
    acc += distributed_delay(x, 0, g.m_delay, g, 0.5)[0];
  }
  benchmark::DoNotOptimize(acc);
}
BENCHMARK(BM_DistributedDelay)->Arg(16)->Arg(64)->Arg(256);

BENCHMARK_MAIN();
