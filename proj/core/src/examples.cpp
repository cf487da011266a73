#include "esd/examples.hpp"

#include "esd/error.hpp"
#include "esd/text.hpp"

namespace esd::model {

using corpus::Vocabulary;

std::vector<GoldTurn> gold_turns(const std::vector<persona::AnnotatedConversation>& convs) {
  std::vector<GoldTurn> out;
  for (std::size_t c = 0; c < convs.size(); ++c) {
    const auto& turns = convs[c].base.turns;
    for (std::size_t t = 1; t < turns.size(); ++t) {
      const auto& u = turns[t];
      if (u.speaker != corpus::Speaker::Supporter || !u.strategy) continue;
      GoldTurn g;
      g.conversation = c;
      g.turn = t;
      g.context.assign(turns.begin(), turns.begin() + static_cast<std::ptrdiff_t>(t));
      g.persona = convs[c].persona_before(t);
      g.strategy = *u.strategy;
      g.response = u.text;
      out.push_back(std::move(g));
    }
  }
  return out;
}

std::vector<GoldTurn> gold_turns(const corpus::Corpus& corpus, const persona::Extractor& extractor) {
  return gold_turns(persona::annotate_corpus(corpus, extractor));
}

std::vector<TokenId> encode_dialogue(const Vocabulary& vocab, std::span<const corpus::Utterance> turns,
                                     std::size_t max_len) {
  std::vector<TokenId> out;
  for (const auto& u : turns) {
    if (!out.empty()) out.push_back(Vocabulary::kSep);
    const auto ids = vocab.encode(u.text);
    out.insert(out.end(), ids.begin(), ids.end());
  }
  if (out.size() > max_len) out.erase(out.begin(), out.end() - static_cast<std::ptrdiff_t>(max_len));
  return out;
}

std::vector<TokenId> encode_persona(const Vocabulary& vocab, const persona::PersonaSet& persona,
                                    std::size_t max_len) {
  std::vector<TokenId> out;
  for (const auto& s : persona.sentences) {
    if (!out.empty()) out.push_back(Vocabulary::kSep);
    const auto ids = vocab.encode(s);
    out.insert(out.end(), ids.begin(), ids.end());
  }
  if (out.size() > max_len) out.resize(max_len);
  return out;
}

Example to_example(const GoldTurn& gold, const Vocabulary& vocab, std::size_t max_len) {
  if (max_len < 3) throw InvalidArgument("to_example: max_len too small");
  Example ex;
  ex.dialogue = encode_dialogue(vocab, gold.context, max_len);
  if (ex.dialogue.empty()) throw InvalidArgument("to_example: empty dialogue context");
  ex.persona = encode_persona(vocab, gold.persona, max_len);
  ex.strategy = gold.strategy;
  ex.response = vocab.encode(gold.response);
  if (ex.response.size() > max_len - 2) ex.response.resize(max_len - 2);
  if (ex.response.empty()) throw InvalidArgument("to_example: empty response");
  return ex;
}

std::vector<Example> to_examples(const std::vector<GoldTurn>& gold, const Vocabulary& vocab, std::size_t max_len) {
  std::vector<Example> out;
  out.reserve(gold.size());
  for (const auto& g : gold) out.push_back(to_example(g, vocab, max_len));
  return out;
}

}  // namespace esd::model
