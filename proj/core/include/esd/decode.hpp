#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "esd/corpus.hpp"
#include "esd/model.hpp"
#include "esd/persona.hpp"

namespace esd::decode {

using corpus::Strategy;
using corpus::TokenId;
using Distribution = std::vector<double>;

enum class AlphaLevel { Low, Medium, High };

inline constexpr double kAlphaLow = 0.0;
inline constexpr double kAlphaMedium = 0.375;
inline constexpr double kAlphaHigh = 0.75;

double alpha_of(AlphaLevel level);
std::string_view level_name(AlphaLevel level);

/// Per-strategy persona emphasis for contrastive decoding.
struct AlphaTable {
  std::array<double, corpus::kNumStrategies> alpha{};
  std::array<AlphaLevel, corpus::kNumStrategies> level{};

  /// Question, Reflection and Self-disclosure low; Others medium;
  /// Restatement, Affirmation, Suggestions and Information high.
  static AlphaTable defaults();

  double operator[](Strategy s) const { return alpha[corpus::index_of(s)]; }
  /// Overrides one entry; the level becomes whichever named level matches
  /// exactly, else the nearest one.
  void set(Strategy s, double value);
};

double alpha_for(Strategy s, const AlphaTable& table);

struct DecodeConfig {
  int top_k = 10;
  double top_p = 0.9;
  double temperature = 0.5;
  double repetition_penalty = 1.03;
  int max_new_tokens = 40;
  std::uint64_t seed = 0;
  AlphaTable alpha_table = AlphaTable::defaults();
  std::optional<double> alpha_override;

  void validate() const;
};

/// q(t) proportional to p_full(t) * (p_full(t) / p_ctx(t))^alpha, evaluated in
/// log space. alpha == 0 returns p_full unchanged.
Distribution contrastive_adjust(std::span<const double> p_full, std::span<const double> p_ctx, double alpha);

/// softmax(logits / temperature).
Distribution apply_temperature(std::span<const double> logits, double temperature);

/// Positive logits of history tokens are divided by the penalty, negative ones
/// multiplied. Each distinct token is penalised once.
std::vector<double> apply_repetition_penalty(std::span<const double> logits, std::span<const TokenId> history,
                                             double penalty);

/// Keeps the tokens that are both in the top k and in the smallest
/// probability-sorted prefix reaching mass p, then renormalises.
Distribution filter_top_k_top_p(std::span<const double> dist, int k, double p);

/// The 8 strategies ranked by their token probability (ties by token id).
std::vector<Strategy> predict_strategy(std::span<const double> p_first_step);

double entropy(std::span<const double> dist);

/// Draws an index by inverse CDF with one uniform.
std::size_t sample_index(std::span<const double> dist, double uniform);

using AdjustFn = std::function<Distribution(std::span<const double>, std::span<const double>, double)>;

/// One response step: temperature on both pathways, contrastive adjustment,
/// repetition penalty, then top-k/top-p. `adjust` defaults to
/// contrastive_adjust.
Distribution next_token_distribution(std::span<const double> logits_full, std::span<const double> logits_ctx,
                                     std::span<const TokenId> history, double alpha, const DecodeConfig& cfg,
                                     const AdjustFn& adjust = {});

struct StepTrace {
  TokenId token = 0;
  double entropy_full = 0.0;
  double entropy_ctx = 0.0;
  Distribution distribution;  // final sampling distribution, only if requested
};

struct GenerationResult {
  Strategy strategy = Strategy::Others;
  bool forced = false;
  double alpha_used = 0.0;
  std::vector<TokenId> tokens;  // response words, no strategy token, no EOS
  std::string text;
  /// All 8 strategies ranked from the full-pathway first step, with their
  /// probabilities renormalised over the strategy tokens.
  std::vector<std::pair<Strategy, double>> strategy_ranking;
  std::vector<StepTrace> trace;
};

struct GenerateOptions {
  bool trace = false;
  bool trace_distributions = false;
  AdjustFn adjust;  // empty = contrastive_adjust
};

GenerationResult generate(const model::Model& model, std::span<const corpus::Utterance> dialogue,
                          const persona::PersonaSet& persona, const DecodeConfig& cfg,
                          std::optional<Strategy> forced_strategy = std::nullopt,
                          const GenerateOptions& options = {});

nlohmann::json trace_to_json(const GenerationResult& result, const corpus::Vocabulary& vocab);

}  // namespace esd::decode
