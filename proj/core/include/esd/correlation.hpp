#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "esd/embedder.hpp"
#include "esd/persona.hpp"

namespace esd::metrics {

enum class ScoreAxis { Empathy, Relevance, IntensityDecrease };
inline constexpr std::array<ScoreAxis, 3> kAllAxes = {ScoreAxis::Empathy, ScoreAxis::Relevance,
                                                      ScoreAxis::IntensityDecrease};

std::string_view axis_name(ScoreAxis axis);
int score_on(const corpus::Scores& scores, ScoreAxis axis);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Ordinary least squares of y on x. Needs at least two points. When x is
/// constant the slope is 0 and the intercept is mean(y); when y is constant R²
/// is 0 (nothing to explain).
LinearFit ols(const std::vector<double>& x, const std::vector<double>& y);

struct Bucket {
  double mean_sim = 0.0;
  std::size_t n = 0;
};

struct AxisReport {
  ScoreAxis axis = ScoreAxis::Empathy;
  std::map<int, Bucket> buckets;  // observed score values only
  LinearFit fit;
};

struct CorrelationReport {
  std::vector<AxisReport> axes;  // empathy, relevance, intensity decrease
  std::vector<double> similarity;        // per analysed conversation
  std::vector<std::size_t> analysed;     // their indices in the input
  std::vector<std::size_t> skipped;      // conversations with no persona at all

  /// Bucket rows "axis,score,mean_sim,n", a blank line, then summary rows
  /// "axis,slope,intercept,r2".
  std::string to_csv() const;
};

/// Similarity of one conversation: the mean cosine between each supporter
/// turn and the persona snapshot known before that turn; supporter turns
/// before the first snapshot are not counted. Returns nullopt if no supporter
/// turn has a persona.
std::optional<double> conversation_similarity(const persona::AnnotatedConversation& conv, const Embedder& embedder);

/// Throws ValidationError naming every conversation without scores.
/// Conversations with no usable persona are recorded in `skipped`.
CorrelationReport correlation_analysis(const std::vector<persona::AnnotatedConversation>& convs,
                                       const Embedder& embedder);

/// Same analysis from precomputed (scores, similarity) pairs.
CorrelationReport correlation_from_pairs(const std::vector<corpus::Scores>& scores,
                                         const std::vector<double>& similarity);

}  // namespace esd::metrics
