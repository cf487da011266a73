#include "esd/correlation.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "esd/error.hpp"
#include "esd/metrics.hpp"

namespace esd::metrics {

std::string_view axis_name(ScoreAxis axis) {
  switch (axis) {
    case ScoreAxis::Empathy: return "empathy";
    case ScoreAxis::Relevance: return "relevance";
    case ScoreAxis::IntensityDecrease: return "intensity_decrease";
  }
  return "empathy";
}

int score_on(const corpus::Scores& s, ScoreAxis axis) {
  switch (axis) {
    case ScoreAxis::Empathy: return s.empathy;
    case ScoreAxis::Relevance: return s.relevance;
    case ScoreAxis::IntensityDecrease: return s.intensity_decrease();
  }
  return 0;
}

LinearFit ols(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw InvalidArgument("ols: x and y differ in length");
  if (x.size() < 2) throw InvalidArgument("ols: need at least two points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit fit;
  if (sxx == 0.0) {
    fit.intercept = my;
    return fit;
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (syy > 0.0) fit.r2 = std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0);
  return fit;
}

std::optional<double> conversation_similarity(const persona::AnnotatedConversation& conv, const Embedder& embedder) {
  double sum = 0.0;
  std::size_t n = 0;
  const auto& turns = conv.base.turns;
  for (std::size_t t = 0; t < turns.size(); ++t) {
    if (turns[t].speaker != corpus::Speaker::Supporter) continue;
    const persona::PersonaSet p = conv.persona_before(t);
    if (p.empty()) continue;
    sum += persona_response_similarity({turns[t].text}, p, embedder);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

CorrelationReport correlation_from_pairs(const std::vector<corpus::Scores>& scores,
                                         const std::vector<double>& similarity) {
  if (scores.size() != similarity.size()) throw InvalidArgument("correlation: scores and similarities differ in length");
  CorrelationReport report;
  report.similarity = similarity;
  report.analysed.resize(scores.size());
  std::iota(report.analysed.begin(), report.analysed.end(), 0);
  for (ScoreAxis axis : kAllAxes) {
    AxisReport ar;
    ar.axis = axis;
    std::vector<double> x;
    x.reserve(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const int s = score_on(scores[i], axis);
      x.push_back(static_cast<double>(s));
      Bucket& b = ar.buckets[s];
      b.mean_sim += similarity[i];
      ++b.n;
    }
    for (auto& [s, b] : ar.buckets) b.mean_sim /= static_cast<double>(b.n);
    ar.fit = ols(x, similarity);
    report.axes.push_back(std::move(ar));
  }
  return report;
}

CorrelationReport correlation_analysis(const std::vector<persona::AnnotatedConversation>& convs,
                                       const Embedder& embedder) {
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < convs.size(); ++i) {
    if (!convs[i].base.scores) missing.push_back(i);
  }
  if (!missing.empty()) {
    std::string list;
    for (std::size_t i : missing) list += (list.empty() ? "" : ", ") + std::to_string(i);
    throw ValidationError("correlation: conversations without scores: " + list);
  }
  std::vector<corpus::Scores> scores;
  std::vector<double> sims;
  std::vector<std::size_t> analysed, skipped;
  for (std::size_t i = 0; i < convs.size(); ++i) {
    const auto sim = conversation_similarity(convs[i], embedder);
    if (!sim) {
      skipped.push_back(i);
      continue;
    }
    scores.push_back(*convs[i].base.scores);
    sims.push_back(*sim);
    analysed.push_back(i);
  }
  CorrelationReport report = correlation_from_pairs(scores, sims);
  report.analysed = std::move(analysed);
  report.skipped = std::move(skipped);
  return report;
}

std::string CorrelationReport::to_csv() const {
  auto num = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  std::ostringstream out;
  out << "axis,score,mean_sim,n\n";
  for (const auto& a : axes) {
    for (const auto& [s, b] : a.buckets) out << axis_name(a.axis) << ',' << s << ',' << num(b.mean_sim) << ',' << b.n << '\n';
  }
  out << "\naxis,slope,intercept,r2\n";
  for (const auto& a : axes) {
    out << axis_name(a.axis) << ',' << num(a.fit.slope) << ',' << num(a.fit.intercept) << ',' << num(a.fit.r2) << '\n';
  }
  return out.str();
}

}  // namespace esd::metrics
