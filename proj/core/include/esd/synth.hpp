#pragma once

#include <cstdint>

#include "esd/corpus.hpp"

namespace esd::corpus {

struct SynthConfig {
  int n_conversations = 50;
  int n_turns = 4;
  // Number of distinct persona words (occupations plus feelings) drawn from
  // the built-in pools.
  int vocab_seed_words = 16;
  std::uint64_t seed = 0;
};

/// Templated emotional-support conversations. Seekers reveal plantable facts
/// ("i am a <noun>", "i feel <adj> about <topic>"); supporter turns cycle through
/// the strategies starting from an offset fixed by the seeker's first message,
/// and only mention facts that are already in the dialogue.
Corpus generate_synthetic(const SynthConfig& cfg);

}  // namespace esd::corpus
