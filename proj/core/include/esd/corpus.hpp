#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "esd/strategy.hpp"

namespace esd::corpus {

enum class Speaker { Seeker, Supporter };

std::string_view speaker_name(Speaker s);

struct Utterance {
  Speaker speaker = Speaker::Seeker;
  std::string text;
  std::optional<Strategy> strategy;  // supporter turns only

  bool operator==(const Utterance&) const = default;
};

/// Crowd-worker ratings attached to a conversation, each on a 1..5 scale.
struct Scores {
  int empathy = 0;
  int relevance = 0;
  int intensity_before = 0;
  int intensity_after = 0;

  int intensity_decrease() const { return intensity_before - intensity_after; }
  bool operator==(const Scores&) const = default;
};

struct Conversation {
  std::string situation;
  std::vector<Utterance> turns;
  std::optional<Scores> scores;

  bool operator==(const Conversation&) const = default;
};

inline constexpr const char* kFormatVersion = "1";

struct Corpus {
  std::vector<Conversation> conversations;
  std::string format_version = kFormatVersion;

  std::size_t size() const { return conversations.size(); }
  bool empty() const { return conversations.empty(); }
  bool operator==(const Corpus&) const = default;
};

/// Merges consecutive same-speaker turns (texts joined by one space). A merged
/// turn keeps the first non-empty strategy label.
std::vector<Utterance> merge_consecutive(std::vector<Utterance> turns);

/// Throws ValidationError if a turn or the conversation breaks an invariant.
/// `index` is used in the message.
void validate(const Conversation& conv, std::size_t index = 0);

// JSON mapping. Parsing normalizes (merges) turns and validates.
nlohmann::json to_json(const Conversation& conv);
nlohmann::json to_json(const Corpus& corpus);
Conversation conversation_from_json(const nlohmann::json& j, std::size_t index = 0);
Corpus corpus_from_json(const nlohmann::json& j);

Corpus parse_corpus(std::string_view json_text);
Corpus load_corpus(const std::filesystem::path& path);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

struct Split {
  Corpus train;
  Corpus valid;
  Corpus test;
};

/// Deterministic shuffle-then-cut by conversation: floor(0.7n) / floor(0.2n) /
/// remainder. Requires at least 10 conversations.
Split split_corpus(const Corpus& corpus, std::uint64_t seed);

/// General ratio form used by the CLI (`--ratio a:b:c`).
Split split_corpus(const Corpus& corpus, std::uint64_t seed, int train_part, int valid_part,
                   int test_part);

}  // namespace esd::corpus
