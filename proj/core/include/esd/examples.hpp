#pragma once

#include <span>
#include <vector>

#include "esd/corpus.hpp"
#include "esd/model.hpp"
#include "esd/persona.hpp"

namespace esd::model {

/// One gold supporter turn with everything needed to train on it or to
/// regenerate it: the dialogue before it, the persona known at that point
/// (latest snapshot before the turn), and the labelled response.
struct GoldTurn {
  std::size_t conversation = 0;
  std::size_t turn = 0;
  std::vector<corpus::Utterance> context;
  persona::PersonaSet persona;
  corpus::Strategy strategy = corpus::Strategy::Others;
  std::string response;
};

/// Every strategy-labelled supporter turn that has at least one preceding
/// utterance. Unlabelled supporter turns are skipped.
std::vector<GoldTurn> gold_turns(const std::vector<persona::AnnotatedConversation>& convs);
std::vector<GoldTurn> gold_turns(const corpus::Corpus& corpus, const persona::Extractor& extractor);

/// u1 SEP u2 SEP ... un; when longer than max_len the oldest tokens are dropped.
std::vector<TokenId> encode_dialogue(const corpus::Vocabulary& vocab, std::span<const corpus::Utterance> turns,
                                     std::size_t max_len);

/// p1 SEP p2 ...; truncated to the first max_len tokens. Empty for an empty set.
std::vector<TokenId> encode_persona(const corpus::Vocabulary& vocab, const persona::PersonaSet& persona,
                                    std::size_t max_len);

Example to_example(const GoldTurn& gold, const corpus::Vocabulary& vocab, std::size_t max_len);
std::vector<Example> to_examples(const std::vector<GoldTurn>& gold, const corpus::Vocabulary& vocab,
                                 std::size_t max_len);

}  // namespace esd::model
