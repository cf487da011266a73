#include "esd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "esd/error.hpp"
#include "esd/text.hpp"

namespace esd::metrics {

namespace {

using Gram = std::vector<std::string>;

std::map<Gram, std::size_t> ngram_counts(const Tokens& tokens, std::size_t n) {
  std::map<Gram, std::size_t> counts;
  if (n == 0 || tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[Gram(tokens.begin() + static_cast<std::ptrdiff_t>(i), tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

std::set<Gram> unique_ngrams(const std::vector<Tokens>& hyps, std::size_t n) {
  std::set<Gram> out;
  for (const auto& h : hyps) {
    for (const auto& [g, c] : ngram_counts(h, n)) out.insert(g);
  }
  return out;
}

}  // namespace

std::size_t ngram_count(const Tokens& tokens, std::size_t n) {
  if (n == 0 || tokens.size() < n) return 0;
  return tokens.size() - n + 1;
}

double bleu_n(const Tokens& hypothesis, const Tokens& reference, std::size_t n) {
  if (n < 1) throw InvalidArgument("bleu_n: n must be >= 1");
  if (hypothesis.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t m = 1; m <= n; ++m) {
    const auto hyp = ngram_counts(hypothesis, m);
    const auto ref = ngram_counts(reference, m);
    const std::size_t total = ngram_count(hypothesis, m);
    if (total == 0) continue;  // precision 1
    std::size_t matched = 0;
    for (const auto& [g, c] : hyp) {
      const auto it = ref.find(g);
      if (it != ref.end()) matched += std::min(c, it->second);
    }
    const double p = matched == 0 ? 1.0 / static_cast<double>(total + 1)
                                  : static_cast<double>(matched) / static_cast<double>(total);
    log_sum += std::log(p);
  }
  const double c = static_cast<double>(hypothesis.size());
  const double r = static_cast<double>(reference.size());
  const double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum / static_cast<double>(n));
}

double distinct_n(const std::vector<Tokens>& hypotheses, std::size_t n) {
  if (n < 1) throw InvalidArgument("distinct_n: n must be >= 1");
  std::size_t total = 0;
  for (const auto& h : hypotheses) total += ngram_count(h, n);
  if (total == 0) throw InvalidArgument("distinct_n: no " + std::to_string(n) + "-grams in the hypotheses");
  return static_cast<double>(unique_ngrams(hypotheses, n).size()) / static_cast<double>(total);
}

double ead_n(const std::vector<Tokens>& hypotheses, std::size_t n, std::size_t vocab_size) {
  if (n < 1) throw InvalidArgument("ead_n: n must be >= 1");
  if (vocab_size < 1) throw InvalidArgument("ead_n: vocabulary size must be >= 1");
  return static_cast<double>(unique_ngrams(hypotheses, n).size()) / static_cast<double>(vocab_size);
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const Tokens& hypothesis, const Tokens& reference) {
  const std::size_t lcs = lcs_length(hypothesis, reference);
  if (lcs == 0) return 0.0;
  const double p = static_cast<double>(lcs) / static_cast<double>(hypothesis.size());
  const double r = static_cast<double>(lcs) / static_cast<double>(reference.size());
  return 2.0 * p * r / (p + r);
}

double perplexity(const model::Model& model, const std::vector<model::Example>& gold) {
  if (gold.empty()) throw InvalidArgument("perplexity: empty gold set");
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& ex : gold) {
    if (ex.response.empty()) throw InvalidArgument("perplexity: empty response");
    const model::Mat h = model::final_hidden(model, ex.dialogue, ex.persona);
    const std::vector<model::TokenId> input = ex.decoder_input();
    const std::vector<model::TokenId> targets = ex.targets();
    const model::Mat logits = model::decoder_logits(model, h, input);
    // Row 0 predicts the strategy token, which is scored by ACC instead.
    for (std::size_t i = 1; i < targets.size(); ++i) {
      const auto row = logits.row(static_cast<Eigen::Index>(i));
      const double m = row.maxCoeff();
      const double lse = m + std::log((row.array() - m).exp().sum());
      sum += lse - row(targets[i]);
      ++count;
    }
  }
  return std::exp(sum / static_cast<double>(count));
}

double strategy_accuracy(const std::vector<std::vector<corpus::Strategy>>& rankings,
                         const std::vector<corpus::Strategy>& gold, std::size_t top_n) {
  if (rankings.size() != gold.size()) {
    throw InvalidArgument("strategy_accuracy: " + std::to_string(rankings.size()) + " rankings for " +
                          std::to_string(gold.size()) + " gold labels");
  }
  if (top_n < 1 || top_n > corpus::kNumStrategies) throw InvalidArgument("strategy_accuracy: top_n must be in 1..8");
  if (gold.empty()) throw InvalidArgument("strategy_accuracy: no items");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto& r = rankings[i];
    const auto end = r.begin() + static_cast<std::ptrdiff_t>(std::min(top_n, r.size()));
    if (std::find(r.begin(), end, gold[i]) != end) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw InvalidArgument("cosine: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

double persona_response_similarity(const std::vector<std::string>& responses, const persona::PersonaSet& persona,
                                   const Embedder& embedder) {
  if (responses.empty()) throw InvalidArgument("persona_response_similarity: no responses");
  if (persona.empty()) throw InvalidArgument("persona_response_similarity: empty persona");
  const std::vector<double> p = embedder.embed(persona.joined());
  double sum = 0.0;
  for (const auto& r : responses) sum += cosine(embedder.embed(r), p);
  return sum / static_cast<double>(responses.size());
}

nlohmann::ordered_json MetricReport::columns() const {
  auto pick = [](const std::map<std::size_t, double>& m, std::size_t k) {
    const auto it = m.find(k);
    return it == m.end() ? 0.0 : it->second;
  };
  nlohmann::ordered_json j;
  j["ACC"] = pick(acc_top, 1);
  j["PPL"] = ppl;
  j["B-2"] = pick(bleu, 2);
  j["B-4"] = pick(bleu, 4);
  j["D-1"] = pick(distinct, 1);
  j["D-2"] = pick(distinct, 2);
  j["E-1"] = pick(ead, 1);
  j["E-2"] = pick(ead, 2);
  j["R-L"] = rouge_l;
  j["Cos-Sim"] = cos_sim;
  return j;
}

nlohmann::ordered_json MetricReport::to_json() const {
  nlohmann::ordered_json top = nlohmann::ordered_json::object();
  for (const auto& [n, v] : acc_top) top[std::to_string(n)] = v;
  nlohmann::ordered_json j;
  j["metrics"] = columns();
  j["acc_top_n"] = top;
  j["n_items"] = n_items;
  j["n_persona_items"] = n_persona_items;
  return j;
}

}  // namespace esd::metrics
