#include "esd/persona.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "esd/error.hpp"
#include "esd/random.hpp"
#include "esd/text.hpp"

namespace esd::persona {

using nlohmann::json;
using Tokens = std::vector<std::string>;

bool PersonaSet::contains(std::string_view sentence) const {
  const std::string key = text::to_lower(sentence);
  return std::any_of(sentences.begin(), sentences.end(),
                     [&](const std::string& s) { return text::to_lower(s) == key; });
}

bool PersonaSet::add(std::string sentence, std::size_t source) {
  if (contains(sentence)) return false;
  sentences.push_back(std::move(sentence));
  provenance.push_back(source);
  return true;
}

std::string PersonaSet::joined() const {
  std::string out;
  for (const auto& s : sentences) {
    if (!out.empty()) out += " . ";
    out += s;
  }
  return out;
}

namespace {

const std::set<std::string> kClauseBreaks = {".", "!", "?", ";", ",", ":"};
const std::set<std::string> kConjunctions = {"and", "but", "so", "because"};
const std::set<std::string> kFillers = {"just",   "really", "also",      "still", "always",
                                        "actually", "currently", "honestly", "now"};
constexpr std::size_t kMaxObjectTokens = 12;

bool starts_first_person(const std::string& tok) {
  return tok == "i" || tok == "i'm" || tok == "im" || tok == "i've";
}

std::vector<Tokens> split_clauses(const Tokens& toks) {
  std::vector<Tokens> clauses(1);
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const std::string& t = toks[i];
    const bool conj_break =
        kConjunctions.count(t) && i + 1 < toks.size() && starts_first_person(toks[i + 1]);
    if (kClauseBreaks.count(t) || conj_break) {
      if (!clauses.back().empty()) clauses.emplace_back();
      continue;
    }
    if (!std::ispunct(static_cast<unsigned char>(t[0])) || t.size() > 1) clauses.back().push_back(t);
  }
  if (clauses.back().empty()) clauses.pop_back();
  return clauses;
}

// From the first first-person token on, with "i'm"/"i've" expanded.
Tokens normalized_tail(const Tokens& clause) {
  auto it = std::find_if(clause.begin(), clause.end(), starts_first_person);
  if (it == clause.end()) return {};
  Tokens out = {"i"};
  if (*it == "i'm" || *it == "im") out.push_back("am");
  if (*it == "i've") out.push_back("have");
  out.insert(out.end(), std::next(it), clause.end());
  return out;
}

std::size_t skip_fillers(const Tokens& t, std::size_t i) {
  while (i < t.size() && kFillers.count(t[i])) ++i;
  return i;
}

bool at(const Tokens& t, std::size_t i, std::string_view w) { return i < t.size() && t[i] == w; }

std::optional<std::string> object_from(const Tokens& t, std::size_t i) {
  if (i >= t.size()) return std::nullopt;
  Tokens obj(t.begin() + static_cast<std::ptrdiff_t>(i),
             t.begin() + static_cast<std::ptrdiff_t>(std::min(t.size(), i + kMaxObjectTokens)));
  return text::detokenize(obj);
}

std::optional<std::string> match_clause(const Tokens& clause) {
  const Tokens t = normalized_tail(clause);
  if (t.empty()) return std::nullopt;
  const std::size_t verb = skip_fillers(t, 1);

  // 1. occupation / study
  if (at(t, verb, "work") && at(t, verb + 1, "as")) {
    if (auto x = object_from(t, verb + 2)) return "i work as " + *x;
  }
  if (at(t, verb, "am")) {
    const std::size_t v = skip_fillers(t, verb + 1);
    if (at(t, v, "studying") && at(t, v + 1, "to") && at(t, v + 2, "be")) {
      if (auto x = object_from(t, v + 3)) return "i'm studying to be " + *x;
    }
  }
  // 2. affect
  if (at(t, verb, "feel")) {
    if (auto x = object_from(t, skip_fillers(t, verb + 1))) return "i feel " + *x;
  }
  if (at(t, verb, "am")) {
    const std::size_t v = skip_fillers(t, verb + 1);
    if (at(t, v, "feeling")) {
      if (auto x = object_from(t, skip_fillers(t, v + 1))) return "i feel " + *x;
    }
  }
  // 3. possession ("i have to ..." is obligation, not possession)
  if (at(t, verb, "have")) {
    std::size_t v = verb + 1;
    if (at(t, v, "got")) ++v;
    if (!at(t, v, "to")) {
      if (auto x = object_from(t, v)) return "i have " + *x;
    }
  }
  // 4. copula
  if (at(t, verb, "am")) {
    if (auto x = object_from(t, skip_fillers(t, verb + 1))) return "i am " + *x;
  }
  return std::nullopt;
}

}  // namespace

std::vector<std::string> RuleExtractor::extract_one(std::string_view utterance) {
  std::vector<std::string> out;
  for (const Tokens& clause : split_clauses(text::tokenize(utterance))) {
    if (auto s = match_clause(clause)) out.push_back(std::move(*s));
  }
  return out;
}

PersonaSet RuleExtractor::extract(const std::vector<std::string>& seeker_utterances) const {
  PersonaSet out;
  for (std::size_t i = 0; i < seeker_utterances.size(); ++i) {
    for (auto& s : extract_one(seeker_utterances[i])) out.add(std::move(s), i);
  }
  return out;
}

PersonaSet rule_extract(const std::vector<std::string>& seeker_utterances) {
  return RuleExtractor().extract(seeker_utterances);
}

std::unique_ptr<Extractor> make_extractor(std::string_view name) {
  if (name == "rule") return std::make_unique<RuleExtractor>();
  throw InvalidArgument("unknown persona extractor '" + std::string(name) + "'");
}

PersonaSet AnnotatedConversation::persona_before(std::size_t turn) const {
  auto it = persona_at_turn.lower_bound(turn);
  if (it == persona_at_turn.begin()) return {};
  return std::prev(it)->second;
}

AnnotatedConversation annotate_conversation(const corpus::Conversation& conv, const Extractor& extractor) {
  AnnotatedConversation out;
  out.base = conv;
  std::vector<std::string> seeker_texts;
  std::vector<std::size_t> seeker_turns;
  for (std::size_t i = 0; i < conv.turns.size(); ++i) {
    const auto& u = conv.turns[i];
    if (u.speaker != corpus::Speaker::Seeker) continue;
    seeker_texts.push_back(u.text);
    seeker_turns.push_back(i);
    if (i < kFirstAnnotatedTurn) continue;
    PersonaSet snap = extractor.extract(seeker_texts);
    for (auto& p : snap.provenance) p = seeker_turns.at(p);
    out.persona_at_turn.emplace(i, std::move(snap));
  }
  return out;
}

std::vector<AnnotatedConversation> annotate_corpus(const corpus::Corpus& corpus, const Extractor& extractor) {
  std::vector<AnnotatedConversation> out;
  out.reserve(corpus.size());
  for (const auto& c : corpus.conversations) out.push_back(annotate_conversation(c, extractor));
  return out;
}

json to_json(const AnnotatedConversation& conv) {
  json j = corpus::to_json(conv.base);
  json snaps = json::object();
  json prov = json::object();
  for (const auto& [turn, set] : conv.persona_at_turn) {
    snaps[std::to_string(turn)] = set.sentences;
    prov[std::to_string(turn)] = set.provenance;
  }
  j["persona_at_turn"] = snaps;
  j["persona_provenance"] = prov;
  return j;
}

json pesconv_to_json(const std::vector<AnnotatedConversation>& convs) {
  json arr = json::array();
  for (const auto& c : convs) arr.push_back(to_json(c));
  return {{"format_version", corpus::kFormatVersion}, {"conversations", arr}};
}

std::vector<AnnotatedConversation> pesconv_from_json(const json& j) {
  const corpus::Corpus base = corpus::corpus_from_json(j);
  std::vector<AnnotatedConversation> out;
  for (std::size_t i = 0; i < base.size(); ++i) {
    AnnotatedConversation a;
    a.base = base.conversations[i];
    const json& cj = j["conversations"][i];
    if (cj.contains("persona_at_turn") && !cj["persona_at_turn"].is_null()) {
      if (!cj["persona_at_turn"].is_object()) {
        throw ParseError("conversation " + std::to_string(i) + ", field 'persona_at_turn': expected object");
      }
      std::map<std::size_t, json> ordered;
      for (const auto& [key, sentences] : cj["persona_at_turn"].items()) {
        std::size_t turn = 0;
        try {
          turn = static_cast<std::size_t>(std::stoul(key));
        } catch (const std::exception&) {
          throw ParseError("conversation " + std::to_string(i) + ": bad persona_at_turn key '" + key + "'");
        }
        if (turn >= a.base.turns.size()) {
          throw ValidationError("conversation " + std::to_string(i) + ": persona_at_turn key out of range");
        }
        ordered.emplace(turn, sentences);
      }
      // "persona_provenance" is optional. Without it a sentence is credited to
      // the first snapshot that contains it.
      const json* prov = nullptr;
      if (cj.contains("persona_provenance") && cj["persona_provenance"].is_object()) prov = &cj["persona_provenance"];
      PersonaSet seen;
      for (const auto& [turn, sentences] : ordered) {
        PersonaSet set;
        const std::string key = std::to_string(turn);
        const bool explicit_prov = prov && prov->contains(key) && (*prov)[key].size() == sentences.size();
        for (std::size_t k = 0; k < sentences.size(); ++k) {
          const std::string text = sentences[k].get<std::string>();
          seen.add(text, turn);
          std::size_t source = turn;
          if (explicit_prov) {
            source = (*prov)[key][k].get<std::size_t>();
            if (source > turn) {
              throw ValidationError("conversation " + std::to_string(i) + ": provenance after its snapshot");
            }
          } else {
            const std::string folded = text::to_lower(text);
            const auto it = std::find_if(seen.sentences.begin(), seen.sentences.end(),
                                         [&](const std::string& x) { return text::to_lower(x) == folded; });
            source = seen.provenance[static_cast<std::size_t>(it - seen.sentences.begin())];
          }
          set.add(text, source);
        }
        a.persona_at_turn.emplace(turn, std::move(set));
      }
    }
    out.push_back(std::move(a));
  }
  return out;
}

void save_pesconv(const std::vector<AnnotatedConversation>& convs, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << pesconv_to_json(convs).dump(2) << '\n';
}

std::vector<AnnotatedConversation> load_pesconv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed PESConv JSON: ") + e.what());
  }
  return pesconv_from_json(j);
}

std::string_view audit_label_name(AuditLabel l) {
  switch (l) {
    case AuditLabel::Reasonable: return "Reasonable";
    case AuditLabel::Contradictory: return "Contradictory";
    case AuditLabel::Hallucinatory: return "Hallucinatory";
    case AuditLabel::Others: return "Others";
  }
  return "Others";
}

std::optional<AuditLabel> parse_audit_label(std::string_view s) {
  for (auto l : {AuditLabel::Reasonable, AuditLabel::Contradictory, AuditLabel::Hallucinatory, AuditLabel::Others}) {
    if (text::to_lower(audit_label_name(l)) == text::to_lower(s)) return l;
  }
  return std::nullopt;
}

void validate(const AuditItem& item) {
  const bool is_other = item.label == AuditLabel::Others;
  const bool has_note = item.note.has_value() && !text::trim(*item.note).empty();
  if (is_other && !has_note) throw ValidationError("audit item labelled Others needs a note");
  if (!is_other && has_note) throw ValidationError("audit note is only allowed with label Others");
}

std::vector<AuditItem> export_audit_sample(const std::vector<AnnotatedConversation>& annotated, std::size_t n,
                                           std::uint64_t seed) {
  std::vector<AuditItem> population;
  for (std::size_t c = 0; c < annotated.size(); ++c) {
    for (const auto& [turn, set] : annotated[c].persona_at_turn) {
      for (const auto& s : set.sentences) population.push_back({c, turn, s, std::nullopt, std::nullopt});
    }
  }
  if (n > population.size()) {
    throw InvalidArgument("audit sample of " + std::to_string(n) + " exceeds " +
                          std::to_string(population.size()) + " available persona sentences");
  }
  std::vector<std::size_t> order(population.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  shuffle(std::span<std::size_t>(order), rng);
  order.resize(n);
  std::sort(order.begin(), order.end());
  std::vector<AuditItem> out;
  out.reserve(n);
  for (std::size_t i : order) out.push_back(population[i]);
  return out;
}

json audit_to_json(const std::vector<AuditItem>& items) {
  json arr = json::array();
  for (const auto& it : items) {
    arr.push_back({{"conversation", it.conversation},
                   {"turn", it.turn},
                   {"persona", it.sentence},
                   {"label", it.label ? json(audit_label_name(*it.label)) : json(nullptr)},
                   {"note", it.note ? json(*it.note) : json(nullptr)}});
  }
  return {{"format_version", "1"},
          {"labels", {"Reasonable", "Contradictory", "Hallucinatory", "Others"}},
          {"items", arr}};
}

std::vector<AuditItem> audit_from_json(const json& j) {
  if (!j.is_object() || !j.contains("items") || !j["items"].is_array()) {
    throw ParseError("audit file: expected object with an 'items' array");
  }
  std::vector<AuditItem> out;
  for (const auto& ij : j["items"]) {
    AuditItem it;
    it.conversation = ij.at("conversation").get<std::size_t>();
    it.turn = ij.at("turn").get<std::size_t>();
    it.sentence = ij.at("persona").get<std::string>();
    if (ij.contains("label") && !ij["label"].is_null()) {
      it.label = parse_audit_label(ij["label"].get<std::string>());
      if (!it.label) throw ParseError("audit file: unknown label " + ij["label"].dump());
    }
    if (ij.contains("note") && !ij["note"].is_null()) it.note = ij["note"].get<std::string>();
    if (it.label) validate(it);
    out.push_back(std::move(it));
  }
  return out;
}

}  // namespace esd::persona
