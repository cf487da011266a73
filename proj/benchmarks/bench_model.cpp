#include <benchmark/benchmark.h>

#include "esd/decode.hpp"
#include "esd/examples.hpp"
#include "esd/model.hpp"
#include "esd/synth.hpp"

namespace {

struct Fixture {
  esd::model::Model model;
  std::vector<esd::model::GoldTurn> gold;
  std::vector<esd::model::Example> examples;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    esd::corpus::SynthConfig sc;
    sc.n_conversations = 20;
    sc.n_turns = 6;
    const auto c = esd::corpus::generate_synthetic(sc);
    esd::model::ModelConfig mc;
    mc.vocab = esd::corpus::build_vocab(c, 5000);
    esd::model::Model m(mc);
    const esd::persona::RuleExtractor ex;
    auto gold = esd::model::gold_turns(c, ex);
    auto examples = esd::model::to_examples(gold, mc.vocab, static_cast<std::size_t>(mc.max_len));
    return Fixture{std::move(m), std::move(gold), std::move(examples)};
  }();
  return f;
}

// One training example: graph build, forward and backward.
void BM_ForwardBackward(benchmark::State& state) {
  const Fixture& f = fixture();
  auto grads = f.model.params().zeros_like();
  std::size_t i = 0;
  for (auto _ : state) {
    grads.set_zero();
    benchmark::DoNotOptimize(esd::model::forward_backward(f.model, f.examples[i++ % f.examples.size()], grads));
  }
}
BENCHMARK(BM_ForwardBackward)->Unit(benchmark::kMicrosecond);

void BM_FinalHidden(benchmark::State& state) {
  const Fixture& f = fixture();
  const auto& ex = f.examples.back();
  for (auto _ : state) benchmark::DoNotOptimize(esd::model::final_hidden(f.model, ex.dialogue, ex.persona));
}
BENCHMARK(BM_FinalHidden)->Unit(benchmark::kMicrosecond);

// A full response: two pathways per step, up to 40 tokens.
void BM_Generate(benchmark::State& state) {
  const Fixture& f = fixture();
  const auto& g = f.gold.back();
  esd::decode::DecodeConfig cfg;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    cfg.seed = seed++;
    benchmark::DoNotOptimize(esd::decode::generate(f.model, g.context, g.persona, cfg));
  }
}
BENCHMARK(BM_Generate)->Unit(benchmark::kMillisecond);

}  // namespace
