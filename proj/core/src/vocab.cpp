#include "esd/vocab.hpp"

#include <algorithm>
#include <map>

#include "esd/error.hpp"
#include "esd/text.hpp"

namespace esd::corpus {
namespace {

std::vector<std::string> reserved_tokens() {
  std::vector<std::string> out = {"[PAD]", "[BOS]", "[EOS]", "[SEP]", "[UNK]"};
  for (Strategy s : kAllStrategies) out.emplace_back(token_text(s));
  return out;
}

}  // namespace

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& words) : tokens_(reserved_tokens()) {
  tokens_.insert(tokens_.end(), words.begin(), words.end());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    auto [it, inserted] = index_.emplace(tokens_[i], static_cast<TokenId>(i));
    if (!inserted) throw ValidationError("vocabulary: duplicate token '" + tokens_[i] + "'");
  }
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw InvalidArgument("vocabulary: id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

Strategy Vocabulary::strategy_of(TokenId id) {
  if (!is_strategy_id(id)) throw InvalidArgument("token id " + std::to_string(id) + " is not a strategy token");
  return kAllStrategies[static_cast<std::size_t>(id - kFirstStrategy)];
}

std::vector<TokenId> Vocabulary::encode(std::string_view s) const {
  std::vector<TokenId> out;
  for (const auto& tok : text::tokenize(s)) out.push_back(id(tok));
  return out;
}

std::string Vocabulary::decode(const std::vector<TokenId>& ids) const {
  std::vector<std::string> words;
  for (TokenId t : ids) {
    if (t == kEos) break;
    if (is_special(t)) continue;
    words.push_back(token(t));
  }
  return text::detokenize(words);
}

Vocabulary build_vocab(const Corpus& corpus, std::size_t max_size) {
  if (max_size < Vocabulary::kNumSpecials + 1) {
    throw InvalidArgument("build_vocab: max_size must leave room for at least one word token");
  }
  std::map<std::string, std::size_t> freq;
  for (const auto& conv : corpus.conversations) {
    for (const auto& u : conv.turns) {
      for (auto& tok : text::tokenize(u.text)) ++freq[std::move(tok)];
    }
  }
  const Vocabulary reserved;
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : freq) {
    if (!reserved.contains(tok)) ranked.emplace_back(tok, n);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  const std::size_t budget = max_size - Vocabulary::kNumSpecials;
  if (ranked.size() > budget) ranked.resize(budget);
  std::vector<std::string> words;
  words.reserve(ranked.size());
  for (auto& [tok, n] : ranked) words.push_back(tok);
  return Vocabulary(words);
}

}  // namespace esd::corpus
