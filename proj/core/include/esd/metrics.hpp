#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "esd/embedder.hpp"
#include "esd/model.hpp"
#include "esd/persona.hpp"
#include "esd/strategy.hpp"

namespace esd::metrics {

using Tokens = std::vector<std::string>;

/// Number of m-grams in `tokens` (0 when shorter than m).
std::size_t ngram_count(const Tokens& tokens, std::size_t n);

/// Geometric mean of clipped m-gram precisions for m = 1..n times the brevity
/// penalty exp(1 - |ref|/|hyp|) when the hypothesis is shorter. An order whose
/// clipped match count is zero is smoothed to 1 / (total + 1). An order for
/// which the hypothesis has no m-grams at all contributes precision 1, so that
/// short outputs are judged only on the orders they can express.
/// Empty hypothesis gives 0.
double bleu_n(const Tokens& hypothesis, const Tokens& reference, std::size_t n);

/// Unique n-grams across all hypotheses over total n-grams. Throws
/// InvalidArgument when there are no n-grams.
double distinct_n(const std::vector<Tokens>& hypotheses, std::size_t n);

/// Unique n-grams across all hypotheses divided by the vocabulary size.
/// Not clamped: for n >= 2 the count of distinct n-grams can exceed V.
double ead_n(const std::vector<Tokens>& hypotheses, std::size_t n, std::size_t vocab_size);

std::size_t lcs_length(const Tokens& a, const Tokens& b);

/// LCS-based balanced F1.
double rouge_l(const Tokens& hypothesis, const Tokens& reference);

/// exp of the mean NLL over gold response tokens and EOS, teacher-forced
/// through the persona pathway. The strategy token is excluded.
double perplexity(const model::Model& model, const std::vector<model::Example>& gold);

/// Fraction of items whose gold strategy is among the first `top_n` entries
/// of the matching ranking.
double strategy_accuracy(const std::vector<std::vector<corpus::Strategy>>& rankings,
                         const std::vector<corpus::Strategy>& gold, std::size_t top_n);

double cosine(const std::vector<double>& a, const std::vector<double>& b);

/// Mean over responses of cosine(embed(response), embed(persona joined)).
double persona_response_similarity(const std::vector<std::string>& responses, const persona::PersonaSet& persona,
                                   const Embedder& embedder);

struct MetricReport {
  std::map<std::size_t, double> acc_top;  // n -> top-n accuracy, n = 1..8
  double ppl = 0.0;
  std::map<std::size_t, double> bleu;      // 2, 4
  std::map<std::size_t, double> distinct;  // 1, 2
  std::map<std::size_t, double> ead;       // 1, 2
  double rouge_l = 0.0;
  double cos_sim = 0.0;
  std::size_t n_items = 0;
  std::size_t n_persona_items = 0;  // items that had a persona for Cos-Sim

  /// Exactly the headline columns, in order:
  /// ACC PPL B-2 B-4 D-1 D-2 E-1 E-2 R-L Cos-Sim.
  nlohmann::ordered_json columns() const;

  /// {"metrics": columns(), "acc_top_n": {...}, "n_items": ..,
  ///  "n_persona_items": ..}
  nlohmann::ordered_json to_json() const;

  bool operator==(const MetricReport&) const = default;
};

inline const std::vector<std::string>& column_names() {
  static const std::vector<std::string> names = {"ACC", "PPL", "B-2", "B-4", "D-1",
                                                 "D-2", "E-1", "E-2", "R-L", "Cos-Sim"};
  return names;
}

}  // namespace esd::metrics
