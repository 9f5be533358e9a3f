#include <benchmark/benchmark.h>

#include <random>

#include "graphprobe/topology.hpp"

using namespace graphprobe;

namespace {

ActivationTrace random_trace(std::size_t n, std::size_t t) {
  std::mt19937_64 rng(1);
  std::normal_distribution<float> d;
  ActivationTrace trace;
  trace.H = MatF(n, t);
  for (Eigen::Index k = 0; k < trace.H.size(); ++k) trace.H.data()[k] = d(rng);
  return trace;
}

void BM_Connectivity(benchmark::State& state) {
  const auto trace = random_trace(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(connectivity(trace));
}
BENCHMARK(BM_Connectivity)->Args({64, 512})->Args({64, 1024})->Args({768, 1024});

void BM_Sparsify(benchmark::State& state) {
  const auto graph = connectivity(random_trace(static_cast<std::size_t>(state.range(0)), 256));
  for (auto _ : state) benchmark::DoNotOptimize(sparsify(graph, 0.1));
}
BENCHMARK(BM_Sparsify)->Arg(64)->Arg(768);

void BM_GraphStats(benchmark::State& state) {
  const auto graph = connectivity(random_trace(static_cast<std::size_t>(state.range(0)), 256));
  for (auto _ : state) benchmark::DoNotOptimize(graph_stats(graph));
}
BENCHMARK(BM_GraphStats)->Arg(64)->Arg(768);

}  // namespace
