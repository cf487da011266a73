#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "esd/corpus.hpp"

namespace esd::persona {

/// Persona sentences in discovery order. `provenance[i]` is the position, in
/// the utterance list handed to the extractor, of the utterance that produced
/// `sentences[i]`. AnnotatedConversation rewrites it to a global turn index.
struct PersonaSet {
  std::vector<std::string> sentences;
  std::vector<std::size_t> provenance;

  bool empty() const { return sentences.empty(); }
  std::size_t size() const { return sentences.size(); }

  /// Case-insensitive membership.
  bool contains(std::string_view sentence) const;

  /// Appends unless a case-insensitive duplicate exists. Returns true if added.
  bool add(std::string sentence, std::size_t source);

  /// Sentences joined by " . " for display or embedding.
  std::string joined() const;

  bool operator==(const PersonaSet&) const = default;
};

/// Anything that infers seeker persona from the seeker's own utterances.
class Extractor {
 public:
  virtual ~Extractor() = default;
  virtual PersonaSet extract(const std::vector<std::string>& seeker_utterances) const = 0;
  virtual std::string name() const = 0;
};

/// Deterministic pattern-table extractor. Each utterance is cut into clauses
/// (sentence punctuation, commas, and "and/but/so/because" when they introduce
/// a new "i ..." clause), and the first matching row of the table wins:
///
///   1. occupation/study  "i work as X", "i'm studying to be X"
///   2. affect            "i feel X", "i am feeling X", "i'm feeling X"
///   3. possession        "i have X", "i've got X"
///   4. copula            "i am X", "i'm X"
///
/// Filler adverbs directly after the subject ("just", "really", ...) are
/// dropped. Output is lowercase, single-spaced, without final punctuation.
class RuleExtractor final : public Extractor {
 public:
  PersonaSet extract(const std::vector<std::string>& seeker_utterances) const override;
  std::string name() const override { return "rule"; }

  /// Persona sentences derivable from one utterance, in clause order.
  static std::vector<std::string> extract_one(std::string_view utterance);
};

PersonaSet rule_extract(const std::vector<std::string>& seeker_utterances);

std::unique_ptr<Extractor> make_extractor(std::string_view name);

/// Zero-based index of the first turn that may carry a persona snapshot (the
/// third utterance of the conversation).
inline constexpr std::size_t kFirstAnnotatedTurn = 2;

struct AnnotatedConversation {
  corpus::Conversation base;
  // turn index (0-based, global over both speakers) -> cumulative snapshot,
  // provenance expressed as global turn indices.
  std::map<std::size_t, PersonaSet> persona_at_turn;

  /// Latest snapshot strictly before `turn`, or empty.
  PersonaSet persona_before(std::size_t turn) const;
};

AnnotatedConversation annotate_conversation(const corpus::Conversation& conv, const Extractor& extractor);

std::vector<AnnotatedConversation> annotate_corpus(const corpus::Corpus& corpus, const Extractor& extractor);

// PESConv: the corpus schema plus "persona_at_turn": {"<turn>": [sentences]}
// and, optionally, "persona_provenance": {"<turn>": [source turn per sentence]}.
nlohmann::json to_json(const AnnotatedConversation& conv);
nlohmann::json pesconv_to_json(const std::vector<AnnotatedConversation>& convs);
std::vector<AnnotatedConversation> pesconv_from_json(const nlohmann::json& j);
void save_pesconv(const std::vector<AnnotatedConversation>& convs, const std::filesystem::path& path);
std::vector<AnnotatedConversation> load_pesconv(const std::filesystem::path& path);

enum class AuditLabel { Reasonable, Contradictory, Hallucinatory, Others };

std::string_view audit_label_name(AuditLabel l);
std::optional<AuditLabel> parse_audit_label(std::string_view s);

struct AuditItem {
  std::size_t conversation = 0;
  std::size_t turn = 0;
  std::string sentence;
  std::optional<AuditLabel> label;
  std::optional<std::string> note;  // required iff label == Others
};

/// Throws ValidationError when the note/label pairing is wrong.
void validate(const AuditItem& item);

/// Draws `n` (conversation, turn, sentence) triples without replacement from
/// all snapshot sentences, deterministically for a seed. Labels stay empty.
std::vector<AuditItem> export_audit_sample(const std::vector<AnnotatedConversation>& annotated, std::size_t n,
                                           std::uint64_t seed);

nlohmann::json audit_to_json(const std::vector<AuditItem>& items);
std::vector<AuditItem> audit_from_json(const nlohmann::json& j);

}  // namespace esd::persona
