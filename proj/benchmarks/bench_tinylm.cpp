#include <benchmark/benchmark.h>

#include <random>

#include "graphprobe/tinylm.hpp"

using namespace graphprobe;

namespace {

std::vector<Token> random_tokens(std::size_t length) {
  std::mt19937_64 rng(3);
  std::vector<Token> out(length);
  for (auto& t : out) t = static_cast<Token>(rng() % 256);
  return out;
}

void BM_LmForward(benchmark::State& state) {
  const auto ckpt = init_checkpoint(LmConfig{});
  const auto tokens = random_tokens(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(forward_logits(ckpt, tokens));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LmForward)->Arg(256)->Arg(1024);

void BM_LmLossAndGradients(benchmark::State& state) {
  LmConfig cfg;
  const auto ckpt = init_checkpoint(cfg);
  const auto tokens = random_tokens(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    auto grads = LmWeights<float>::zeros(cfg);
    benchmark::DoNotOptimize(lm_loss_and_gradients<float>(cfg, ckpt.weights, tokens, &grads));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LmLossAndGradients)->Arg(512);

}  // namespace
