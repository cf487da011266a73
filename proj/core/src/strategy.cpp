#include "esd/strategy.hpp"

#include <cctype>

namespace esd::corpus {
namespace {

struct Names {
  std::string_view display;
  std::string_view ident;
  std::string_view token;
};

constexpr std::array<Names, kNumStrategies> kNames = {{
    {"Question", "Question", "[Question]"},
    {"Restatement or Paraphrasing", "RestatementOrParaphrasing", "[Restatement_or_Paraphrasing]"},
    {"Reflection of feelings", "ReflectionOfFeelings", "[Reflection_of_feelings]"},
    {"Self-disclosure", "SelfDisclosure", "[Self-disclosure]"},
    {"Affirmation and Reassurance", "AffirmationAndReassurance", "[Affirmation_and_Reassurance]"},
    {"Providing Suggestions", "ProvidingSuggestions", "[Providing_Suggestions]"},
    {"Information", "Information", "[Information]"},
    {"Others", "Others", "[Others]"},
}};

// Lowercase alphanumerics only, so "Self-disclosure", "SelfDisclosure" and
// "[Self-disclosure]" all compare equal.
std::string fold(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

}  // namespace

std::string_view display_name(Strategy s) { return kNames[index_of(s)].display; }
std::string_view identifier(Strategy s) { return kNames[index_of(s)].ident; }
std::string_view token_text(Strategy s) { return kNames[index_of(s)].token; }

std::optional<Strategy> parse_strategy(std::string_view name) {
  const std::string key = fold(name);
  if (key.empty()) return std::nullopt;
  for (Strategy s : kAllStrategies) {
    const Names& n = kNames[index_of(s)];
    if (fold(n.display) == key || fold(n.ident) == key || fold(n.token) == key) return s;
  }
  return std::nullopt;
}

}  // namespace esd::corpus
