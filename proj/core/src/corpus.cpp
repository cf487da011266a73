#include "esd/corpus.hpp"

#include <fstream>
#include <numeric>
#include <sstream>

#include "esd/error.hpp"
#include "esd/random.hpp"
#include "esd/text.hpp"

namespace esd::corpus {

using nlohmann::json;

std::string_view speaker_name(Speaker s) { return s == Speaker::Seeker ? "seeker" : "supporter"; }

std::vector<Utterance> merge_consecutive(std::vector<Utterance> turns) {
  std::vector<Utterance> out;
  out.reserve(turns.size());
  for (auto& t : turns) {
    if (!out.empty() && out.back().speaker == t.speaker) {
      Utterance& prev = out.back();
      prev.text = text::trim(prev.text) + " " + text::trim(t.text);
      if (!prev.strategy) prev.strategy = t.strategy;
      continue;
    }
    out.push_back(std::move(t));
  }
  return out;
}

void validate(const Conversation& conv, std::size_t index) {
  auto fail = [&](const std::string& what) {
    throw ValidationError("conversation " + std::to_string(index) + ": " + what);
  };
  if (conv.turns.size() < 2) fail("needs at least 2 turns");
  for (std::size_t i = 0; i < conv.turns.size(); ++i) {
    const Utterance& u = conv.turns[i];
    if (text::trim(u.text).empty()) fail("turn " + std::to_string(i) + " has empty text");
    if (u.strategy && u.speaker != Speaker::Supporter) {
      fail("turn " + std::to_string(i) + " is a seeker turn with a strategy label");
    }
    if (i > 0 && conv.turns[i - 1].speaker == u.speaker) {
      fail("turns " + std::to_string(i - 1) + " and " + std::to_string(i) + " share a speaker");
    }
  }
  if (conv.scores) {
    const Scores& s = *conv.scores;
    for (int v : {s.empathy, s.relevance, s.intensity_before, s.intensity_after}) {
      if (v < 1 || v > 5) fail("score outside 1..5");
    }
  }
}

json to_json(const Conversation& conv) {
  json turns = json::array();
  for (const auto& u : conv.turns) {
    turns.push_back({{"speaker", speaker_name(u.speaker)},
                     {"strategy", u.strategy ? json(display_name(*u.strategy)) : json(nullptr)},
                     {"text", u.text}});
  }
  json scores = nullptr;
  if (conv.scores) {
    scores = {{"empathy", conv.scores->empathy},
              {"relevance", conv.scores->relevance},
              {"intensity_before", conv.scores->intensity_before},
              {"intensity_after", conv.scores->intensity_after}};
  }
  return {{"situation", conv.situation}, {"scores", scores}, {"turns", turns}};
}

json to_json(const Corpus& corpus) {
  json convs = json::array();
  for (const auto& c : corpus.conversations) convs.push_back(to_json(c));
  return {{"format_version", corpus.format_version}, {"conversations", convs}};
}

namespace {

[[noreturn]] void field_error(std::size_t conv, const std::string& field, const std::string& why) {
  throw ParseError("conversation " + std::to_string(conv) + ", field '" + field + "': " + why);
}

int score_field(const json& s, const char* key, std::size_t index) {
  if (!s.contains(key) || !s[key].is_number_integer()) {
    field_error(index, std::string("scores.") + key, "expected integer");
  }
  return s[key].get<int>();
}

}  // namespace

Conversation conversation_from_json(const json& j, std::size_t index) {
  if (!j.is_object()) field_error(index, "", "expected object");
  Conversation conv;
  if (j.contains("situation") && !j["situation"].is_null()) {
    if (!j["situation"].is_string()) field_error(index, "situation", "expected string");
    conv.situation = j["situation"].get<std::string>();
  }
  if (j.contains("scores") && !j["scores"].is_null()) {
    const json& s = j["scores"];
    if (!s.is_object()) field_error(index, "scores", "expected object or null");
    conv.scores = Scores{score_field(s, "empathy", index), score_field(s, "relevance", index),
                         score_field(s, "intensity_before", index),
                         score_field(s, "intensity_after", index)};
  }
  if (!j.contains("turns") || !j["turns"].is_array()) field_error(index, "turns", "expected array");
  std::vector<Utterance> turns;
  for (std::size_t t = 0; t < j["turns"].size(); ++t) {
    const json& tj = j["turns"][t];
    const std::string where = "turns[" + std::to_string(t) + "]";
    if (!tj.is_object()) field_error(index, where, "expected object");
    if (!tj.contains("speaker") || !tj["speaker"].is_string()) {
      field_error(index, where + ".speaker", "expected \"seeker\" or \"supporter\"");
    }
    Utterance u;
    const std::string sp = text::to_lower(tj["speaker"].get<std::string>());
    if (sp == "seeker" || sp == "usr") {
      u.speaker = Speaker::Seeker;
    } else if (sp == "supporter" || sp == "sys") {
      u.speaker = Speaker::Supporter;
    } else {
      field_error(index, where + ".speaker", "unknown speaker '" + sp + "'");
    }
    if (!tj.contains("text") || !tj["text"].is_string()) field_error(index, where + ".text", "expected string");
    u.text = tj["text"].get<std::string>();
    if (tj.contains("strategy") && !tj["strategy"].is_null()) {
      if (!tj["strategy"].is_string()) field_error(index, where + ".strategy", "expected string or null");
      const std::string name = tj["strategy"].get<std::string>();
      auto s = parse_strategy(name);
      if (!s) field_error(index, where + ".strategy", "unknown strategy '" + name + "'");
      u.strategy = s;
    }
    turns.push_back(std::move(u));
  }
  conv.turns = merge_consecutive(std::move(turns));
  validate(conv, index);
  return conv;
}

Corpus corpus_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("corpus: top level must be an object");
  Corpus corpus;
  if (j.contains("format_version")) {
    if (!j["format_version"].is_string()) throw ParseError("corpus: format_version must be a string");
    corpus.format_version = j["format_version"].get<std::string>();
    if (corpus.format_version != kFormatVersion) {
      throw ParseError("corpus: unsupported format_version '" + corpus.format_version + "'");
    }
  }
  if (!j.contains("conversations") || !j["conversations"].is_array()) {
    throw ParseError("corpus: field 'conversations' must be an array");
  }
  const json& convs = j["conversations"];
  corpus.conversations.reserve(convs.size());
  for (std::size_t i = 0; i < convs.size(); ++i) {
    corpus.conversations.push_back(conversation_from_json(convs[i], i));
  }
  return corpus;
}

Corpus parse_corpus(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < e.byte && i < json_text.size(); ++i) {
      if (json_text[i] == '\n') ++line;
    }
    throw ParseError("malformed JSON at line " + std::to_string(line) + ": " + e.what());
  }
  return corpus_from_json(j);
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open corpus file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_corpus(ss.str());
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write corpus file " + path.string());
  out << to_json(corpus).dump(2) << '\n';
}

Split split_corpus(const Corpus& corpus, std::uint64_t seed) { return split_corpus(corpus, seed, 7, 2, 1); }

Split split_corpus(const Corpus& corpus, std::uint64_t seed, int train_part, int valid_part, int test_part) {
  const std::size_t n = corpus.size();
  if (n < 10) throw InvalidArgument("split_corpus needs at least 10 conversations, got " + std::to_string(n));
  if (train_part < 0 || valid_part < 0 || test_part < 0 || train_part + valid_part + test_part == 0) {
    throw InvalidArgument("split ratio parts must be non-negative with a positive sum");
  }
  const std::size_t total = static_cast<std::size_t>(train_part + valid_part + test_part);
  const std::size_t n_train = n * static_cast<std::size_t>(train_part) / total;
  const std::size_t n_valid = n * static_cast<std::size_t>(valid_part) / total;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  shuffle(std::span<std::size_t>(order), rng);

  Split out;
  for (auto* part : {&out.train, &out.valid, &out.test}) part->format_version = corpus.format_version;
  for (std::size_t i = 0; i < n; ++i) {
    Corpus& dst = i < n_train ? out.train : (i < n_train + n_valid ? out.valid : out.test);
    dst.conversations.push_back(corpus.conversations[order[i]]);
  }
  return out;
}

}  // namespace esd::corpus
