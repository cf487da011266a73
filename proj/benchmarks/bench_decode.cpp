#include <benchmark/benchmark.h>

#include <vector>

#include "esd/decode.hpp"
#include "esd/random.hpp"

namespace {

std::vector<double> random_logits(std::size_t n, std::uint64_t seed) {
  esd::Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = 2.0 * esd::normal01(rng);
  return v;
}

void BM_ContrastiveAdjust(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto pf = esd::decode::apply_temperature(random_logits(n, 1), 1.0);
  const auto pc = esd::decode::apply_temperature(random_logits(n, 2), 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(esd::decode::contrastive_adjust(pf, pc, 0.75));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ContrastiveAdjust)->Arg(1 << 10)->Arg(1 << 13)->Arg(1 << 15);

// The whole per-token sampling stack on precomputed logits.
void BM_NextTokenDistribution(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto lf = random_logits(n, 3);
  const auto lc = random_logits(n, 4);
  const std::vector<esd::corpus::TokenId> history = {20, 31, 57, 20, 99};
  const esd::decode::DecodeConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(esd::decode::next_token_distribution(lf, lc, history, 0.75, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_NextTokenDistribution)->Arg(1 << 10)->Arg(1 << 13)->Arg(1 << 15);

void BM_FilterTopKTopP(benchmark::State& state) {
  const auto p = esd::decode::apply_temperature(random_logits(static_cast<std::size_t>(state.range(0)), 5), 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(esd::decode::filter_top_k_top_p(p, 10, 0.9));
}
BENCHMARK(BM_FilterTopKTopP)->Arg(1 << 10)->Arg(1 << 15);

}  // namespace
