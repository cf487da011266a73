#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "esd/corpus.hpp"

namespace esd::corpus {

using TokenId = std::int32_t;

/// Word vocabulary. The first 13 ids are reserved, in this order:
/// [PAD] [BOS] [EOS] [SEP] [UNK] followed by the 8 strategy tokens in
/// Strategy order.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kSep = 3;
  static constexpr TokenId kUnk = 4;
  static constexpr TokenId kFirstStrategy = 5;
  static constexpr std::size_t kNumSpecials = 5 + kNumStrategies;

  /// Vocabulary holding only the reserved tokens.
  Vocabulary();

  /// Reserved tokens followed by `words` (which must not repeat or collide
  /// with a reserved token).
  explicit Vocabulary(const std::vector<std::string>& words);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  TokenId id(std::string_view token) const;  // kUnk when absent
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;

  static constexpr TokenId strategy_id(Strategy s) {
    return kFirstStrategy + static_cast<TokenId>(index_of(s));
  }
  static bool is_strategy_id(TokenId id) {
    return id >= kFirstStrategy && id < kFirstStrategy + static_cast<TokenId>(kNumStrategies);
  }
  static Strategy strategy_of(TokenId id);
  static bool is_special(TokenId id) { return id >= 0 && id < static_cast<TokenId>(kNumSpecials); }

  std::vector<TokenId> encode(std::string_view text) const;
  std::string decode(const std::vector<TokenId>& ids) const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Specials first, then word tokens by descending frequency with
/// lexicographic tie-break, truncated so that size() <= max_size.
Vocabulary build_vocab(const Corpus& corpus, std::size_t max_size);

}  // namespace esd::corpus
