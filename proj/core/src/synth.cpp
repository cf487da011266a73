#include "esd/synth.hpp"

#include <algorithm>
#include <array>

#include "esd/error.hpp"
#include "esd/random.hpp"

namespace esd::corpus {
namespace {

constexpr std::array<const char*, 16> kNouns = {
    "plumber", "teacher", "nurse",  "student", "pharmacist", "baker",  "driver",  "painter",
    "farmer",  "chef",    "lawyer", "doctor",  "cashier",    "mechanic", "writer", "soldier"};
constexpr std::array<const char*, 12> kFeelings = {
    "sad",     "anxious",  "lonely",      "stressed", "tired",    "angry",
    "worried", "hopeless", "overwhelmed", "scared",   "confused", "frustrated"};
constexpr std::array<const char*, 6> kTopics = {"job", "exams", "family", "partner", "health", "money"};
constexpr std::array<const char*, 6> kPossessions = {"two kids", "a dog",         "a new boss",
                                                     "a loan",   "a sick mother", "a long commute"};

struct Facts {
  std::string noun;
  std::size_t noun_index = 0;
  std::string feeling;
  std::string topic;
  std::string possession;
};

std::string fill(std::string tmpl, const Facts& f) {
  auto sub = [&](const std::string& key, const std::string& value) {
    for (std::size_t pos; (pos = tmpl.find(key)) != std::string::npos;) tmpl.replace(pos, key.size(), value);
  };
  sub("{noun}", f.noun);
  sub("{adj}", f.feeling);
  sub("{topic}", f.topic);
  sub("{thing}", f.possession);
  return tmpl;
}

std::string seeker_text(int ordinal, const Facts& f) {
  switch (ordinal) {
    case 0: return fill("hi , i am a {noun} .", f);
    case 1: return fill("i feel {adj} about my {topic} .", f);
    case 2: return fill("i have {thing} .", f);
    default: break;
  }
  static constexpr std::array<const char*, 3> kLater = {
      "it is hard to talk about my {topic} .", "i am still {adj} .", "thank you for listening ."};
  return fill(kLater[static_cast<std::size_t>(ordinal - 3) % kLater.size()], f);
}

// First supporter reply only knows the occupation; later ones may also use
// the feeling and topic revealed by the seeker's second message.
std::string supporter_text(Strategy s, bool knows_feeling, const Facts& f) {
  struct Pair {
    const char* early;
    const char* later;
  };
  static constexpr std::array<Pair, kNumStrategies> kTemplates = {{
      {"how long have you been a {noun} ?", "why do you feel {adj} about your {topic} ?"},
      {"so you work as a {noun} .", "so your {topic} makes you feel {adj} ."},
      {"it sounds like being a {noun} is hard .", "you sound really {adj} right now ."},
      {"i used to know a {noun} too .", "i also felt {adj} about my {topic} once ."},
      {"being a {noun} takes real strength .", "it is okay to feel {adj} , you are a great {noun} ."},
      {"maybe talk to another {noun} about it .",
       "maybe talk to a friend about your {topic} , it may help you feel less {adj} ."},
      {"many people who are a {noun} feel the same .", "many {noun}s feel {adj} about their {topic} ."},
      {"i am here for you .", "i am here for you and your {topic} ."},
  }};
  const Pair& p = kTemplates[index_of(s)];
  return fill(knows_feeling ? p.later : p.early, f);
}

int draw_score(Rng& rng) { return 1 + static_cast<int>(uniform_index(rng, 5)); }

}  // namespace

Corpus generate_synthetic(const SynthConfig& cfg) {
  if (cfg.n_conversations < 1 || cfg.n_turns < 1 || cfg.vocab_seed_words < 1) {
    throw InvalidArgument("generate_synthetic: all counts must be >= 1");
  }
  // The Conversation invariant needs two turns, so a one-turn request still
  // yields a seeker message plus one reply.
  const int n_turns = std::max(cfg.n_turns, 2);
  const std::size_t n_nouns =
      std::clamp<std::size_t>((static_cast<std::size_t>(cfg.vocab_seed_words) + 1) / 2, 1, kNouns.size());
  const std::size_t n_feelings =
      std::clamp<std::size_t>(static_cast<std::size_t>(cfg.vocab_seed_words) / 2, 1, kFeelings.size());

  Rng rng(cfg.seed);
  Corpus corpus;
  for (int c = 0; c < cfg.n_conversations; ++c) {
    Facts f;
    f.noun_index = uniform_index(rng, n_nouns);
    f.noun = kNouns[f.noun_index];
    f.feeling = kFeelings[uniform_index(rng, n_feelings)];
    f.topic = kTopics[uniform_index(rng, kTopics.size())];
    f.possession = kPossessions[uniform_index(rng, kPossessions.size())];

    Conversation conv;
    conv.situation = "i feel " + f.feeling + " about my " + f.topic;
    int seeker_ordinal = 0;
    int supporter_ordinal = 0;
    for (int t = 0; t < n_turns; ++t) {
      if (t % 2 == 0) {
        conv.turns.push_back({Speaker::Seeker, seeker_text(seeker_ordinal++, f), std::nullopt});
      } else {
        const Strategy s = kAllStrategies[(f.noun_index + static_cast<std::size_t>(supporter_ordinal)) %
                                          kNumStrategies];
        conv.turns.push_back({Speaker::Supporter, supporter_text(s, seeker_ordinal >= 2, f), s});
        ++supporter_ordinal;
      }
    }
    Scores scores;
    scores.empathy = draw_score(rng);
    scores.relevance = draw_score(rng);
    scores.intensity_before = draw_score(rng);
    scores.intensity_after = draw_score(rng);
    conv.scores = scores;
    corpus.conversations.push_back(std::move(conv));
  }
  return corpus;
}

}  // namespace esd::corpus
