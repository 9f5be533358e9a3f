#include <benchmark/benchmark.h>

#include <random>

#include "graphprobe/probe.hpp"

using namespace graphprobe;

namespace {

ConnectivityGraph random_graph(std::size_t n, double keep) {
  std::mt19937_64 rng(2);
  std::normal_distribution<float> d;
  ActivationTrace trace;
  trace.H = MatF(n, 256);
  for (Eigen::Index k = 0; k < trace.H.size(); ++k) trace.H.data()[k] = d(rng);
  const auto g = connectivity(trace);
  return keep < 1.0 ? sparsify(g, keep) : g;
}

ProbeConfig config(std::size_t hops) {
  ProbeConfig c;
  c.hops = hops;
  return c;
}

// Arguments: nodes, hops, kept percentage.
void BM_GcnForward(benchmark::State& state) {
  const auto cfg = config(static_cast<std::size_t>(state.range(1)));
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto adj = Adjacency<float>::from_graph(random_graph(n, state.range(2) / 100.0));
  const auto params = ProbeParams<float>::init(n, cfg, 1);
  GcnCache<float> cache;
  for (auto _ : state) benchmark::DoNotOptimize(gcn_forward(adj, params, cfg, &cache));
}
BENCHMARK(BM_GcnForward)->Args({64, 1, 100})->Args({64, 2, 10})->Args({768, 1, 100})->Args({768, 1, 10});

void BM_ProbeGradients(benchmark::State& state) {
  const auto cfg = config(static_cast<std::size_t>(state.range(1)));
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<LabeledGraph<float>> batch;
  for (int k = 0; k < 16; ++k) {
    batch.push_back({Adjacency<float>::from_graph(random_graph(n, state.range(2) / 100.0)), 0.5f});
  }
  const auto params = ProbeParams<float>::init(n, cfg, 1);
  auto grads = ProbeParams<float>::zeros_like(params);
  for (auto _ : state) benchmark::DoNotOptimize(probe_gradients<float>(batch, params, cfg, grads));
}
BENCHMARK(BM_ProbeGradients)->Args({64, 1, 100})->Args({64, 2, 10});

}  // namespace
