#pragma once

// Shared helpers for the test binaries.

#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "esd/corpus.hpp"
#include "esd/examples.hpp"
#include "esd/model.hpp"
#include "esd/persona.hpp"
#include "esd/random.hpp"
#include "esd/train.hpp"
#include "esd/vocab.hpp"

namespace esd::persona {

inline void PrintTo(const PersonaSet& p, std::ostream* os) {
  *os << "{";
  for (std::size_t i = 0; i < p.size(); ++i) *os << (i ? "; " : "") << p.sentences[i] << " @" << p.provenance[i];
  *os << "}";
}

}  // namespace esd::persona

namespace esd::testing {

inline std::string fixture_path(const std::string& name) { return std::string(ESD_FIXTURE_DIR) + "/" + name; }

inline nlohmann::json load_fixture(const std::string& name) {
  std::ifstream in(fixture_path(name));
  if (!in) throw std::runtime_error("missing fixture " + name);
  return nlohmann::json::parse(in);
}

inline corpus::Utterance seeker(std::string text) { return {corpus::Speaker::Seeker, std::move(text), std::nullopt}; }
inline corpus::Utterance supporter(std::string text, corpus::Strategy s = corpus::Strategy::Question) {
  return {corpus::Speaker::Supporter, std::move(text), s};
}

inline corpus::Vocabulary small_vocab(const std::vector<std::string>& words) { return corpus::Vocabulary(words); }

/// A model small enough for finite differences.
inline model::ModelConfig tiny_config(corpus::Vocabulary vocab, std::uint64_t seed = 3) {
  model::ModelConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_layers = 1;
  c.d_ff = 12;
  c.max_len = 32;
  c.seed = seed;
  c.vocab = std::move(vocab);
  return c;
}

/// Random probability vector with every entry positive.
inline std::vector<double> random_distribution(Rng& rng, std::size_t n) {
  std::vector<double> p(n);
  double s = 0.0;
  for (double& x : p) {
    x = 0.01 + uniform01(rng);
    s += x;
  }
  for (double& x : p) x /= s;
  return p;
}

inline std::vector<std::vector<std::string>> random_token_corpus(Rng& rng, std::size_t max_docs, std::size_t max_len,
                                                                 std::size_t alphabet) {
  std::vector<std::vector<std::string>> docs(1 + uniform_index(rng, max_docs));
  for (auto& d : docs) {
    d.resize(1 + uniform_index(rng, max_len));
    for (auto& t : d) t = "w" + std::to_string(uniform_index(rng, alphabet));
  }
  return docs;
}

}  // namespace esd::testing
