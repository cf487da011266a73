#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace esd::corpus {

/// The eight emotional-support strategies. The numeric order is fixed and
/// determines the strategy token ids in every Vocabulary.
enum class Strategy : int {
  Question = 0,
  RestatementOrParaphrasing,
  ReflectionOfFeelings,
  SelfDisclosure,
  AffirmationAndReassurance,
  ProvidingSuggestions,
  Information,
  Others,
};

inline constexpr std::size_t kNumStrategies = 8;

inline constexpr std::array<Strategy, kNumStrategies> kAllStrategies = {
    Strategy::Question,
    Strategy::RestatementOrParaphrasing,
    Strategy::ReflectionOfFeelings,
    Strategy::SelfDisclosure,
    Strategy::AffirmationAndReassurance,
    Strategy::ProvidingSuggestions,
    Strategy::Information,
    Strategy::Others,
};

constexpr std::size_t index_of(Strategy s) { return static_cast<std::size_t>(s); }

/// Human-readable name as used in corpus files ("Providing Suggestions").
std::string_view display_name(Strategy s);

/// Identifier-style name ("ProvidingSuggestions").
std::string_view identifier(Strategy s);

/// Reserved vocabulary token for the strategy ("[Providing_Suggestions]").
std::string_view token_text(Strategy s);

/// Accepts the display name, the identifier, or the token text; case and
/// separator insensitive. Returns nullopt for anything else.
std::optional<Strategy> parse_strategy(std::string_view name);

}  // namespace esd::corpus
