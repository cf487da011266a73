#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "esd/embedder.hpp"
#include "esd/metrics.hpp"
#include "esd/random.hpp"

namespace {

std::vector<esd::metrics::Tokens> corpus(std::size_t docs, std::size_t len, std::uint64_t seed) {
  esd::Rng rng(seed);
  std::vector<esd::metrics::Tokens> out(docs);
  for (auto& d : out) {
    d.resize(len);
    for (auto& t : d) t = "w" + std::to_string(esd::uniform_index(rng, 500));
  }
  return out;
}

void BM_Bleu4(benchmark::State& state) {
  const auto c = corpus(2, static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(esd::metrics::bleu_n(c[0], c[1], 4));
}
BENCHMARK(BM_Bleu4)->Arg(20)->Arg(200);

void BM_RougeL(benchmark::State& state) {
  const auto c = corpus(2, static_cast<std::size_t>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(esd::metrics::rouge_l(c[0], c[1]));
}
BENCHMARK(BM_RougeL)->Arg(20)->Arg(200);

void BM_Distinct2(benchmark::State& state) {
  const auto c = corpus(static_cast<std::size_t>(state.range(0)), 20, 3);
  for (auto _ : state) benchmark::DoNotOptimize(esd::metrics::distinct_n(c, 2));
}
BENCHMARK(BM_Distinct2)->Arg(100)->Arg(1000);

void BM_Embed(benchmark::State& state) {
  const auto e = esd::metrics::make_default_embedder();
  for (auto _ : state) benchmark::DoNotOptimize(e->embed("i am so worried about my job and i feel tired every day"));
}
BENCHMARK(BM_Embed);

}  // namespace
