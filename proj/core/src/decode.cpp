#include "esd/decode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "esd/error.hpp"
#include "esd/examples.hpp"
#include "esd/random.hpp"

namespace esd::decode {

using corpus::Vocabulary;

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

double alpha_of(AlphaLevel level) {
  switch (level) {
    case AlphaLevel::Low: return kAlphaLow;
    case AlphaLevel::Medium: return kAlphaMedium;
    case AlphaLevel::High: return kAlphaHigh;
  }
  return kAlphaLow;
}

std::string_view level_name(AlphaLevel level) {
  switch (level) {
    case AlphaLevel::Low: return "low";
    case AlphaLevel::Medium: return "medium";
    case AlphaLevel::High: return "high";
  }
  return "low";
}

AlphaTable AlphaTable::defaults() {
  AlphaTable t;
  auto put = [&t](Strategy s, AlphaLevel l) {
    t.level[corpus::index_of(s)] = l;
    t.alpha[corpus::index_of(s)] = alpha_of(l);
  };
  put(Strategy::Question, AlphaLevel::Low);
  put(Strategy::RestatementOrParaphrasing, AlphaLevel::High);
  put(Strategy::ReflectionOfFeelings, AlphaLevel::Low);
  put(Strategy::SelfDisclosure, AlphaLevel::Low);
  put(Strategy::AffirmationAndReassurance, AlphaLevel::High);
  put(Strategy::ProvidingSuggestions, AlphaLevel::High);
  put(Strategy::Information, AlphaLevel::High);
  put(Strategy::Others, AlphaLevel::Medium);
  return t;
}

void AlphaTable::set(Strategy s, double value) {
  if (!(value >= 0.0) || !std::isfinite(value)) throw InvalidArgument("alpha must be finite and >= 0");
  alpha[corpus::index_of(s)] = value;
  AlphaLevel best = AlphaLevel::Low;
  for (AlphaLevel l : {AlphaLevel::Low, AlphaLevel::Medium, AlphaLevel::High}) {
    if (std::abs(alpha_of(l) - value) < std::abs(alpha_of(best) - value)) best = l;
  }
  level[corpus::index_of(s)] = best;
}

double alpha_for(Strategy s, const AlphaTable& table) { return table[s]; }

void DecodeConfig::validate() const {
  if (top_k < 1) throw InvalidArgument("decode config: top_k must be >= 1");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw InvalidArgument("decode config: top_p must lie in (0, 1]");
  if (!(temperature > 0.0)) throw InvalidArgument("decode config: temperature must be > 0");
  if (!(repetition_penalty >= 1.0)) throw InvalidArgument("decode config: repetition_penalty must be >= 1");
  if (max_new_tokens < 0) throw InvalidArgument("decode config: max_new_tokens must be >= 0");
  if (alpha_override && !(*alpha_override >= 0.0)) throw InvalidArgument("decode config: alpha must be >= 0");
}

Distribution contrastive_adjust(std::span<const double> p_full, std::span<const double> p_ctx, double alpha) {
  if (p_full.size() != p_ctx.size()) throw InvalidArgument("contrastive_adjust: vocabulary sizes differ");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw InvalidArgument("contrastive_adjust: alpha must be >= 0");
  for (std::size_t t = 0; t < p_full.size(); ++t) {
    if (p_full[t] > 0.0 && !(p_ctx[t] > 0.0)) {
      throw InvalidArgument("contrastive_adjust: p_ctx is zero at token " + std::to_string(t) +
                            " where p_full is positive");
    }
  }
  if (alpha == 0.0) return Distribution(p_full.begin(), p_full.end());

  std::vector<double> logq(p_full.size(), kNegInf);
  double m = kNegInf;
  for (std::size_t t = 0; t < p_full.size(); ++t) {
    if (p_full[t] > 0.0) {
      logq[t] = (1.0 + alpha) * std::log(p_full[t]) - alpha * std::log(p_ctx[t]);
      m = std::max(m, logq[t]);
    }
  }
  if (m == kNegInf) throw InvalidArgument("contrastive_adjust: p_full has no mass");
  double z = 0.0;
  for (double v : logq) z += v == kNegInf ? 0.0 : std::exp(v - m);
  const double log_z = m + std::log(z);
  Distribution q(p_full.size(), 0.0);
  for (std::size_t t = 0; t < q.size(); ++t) {
    if (logq[t] != kNegInf) q[t] = std::exp(logq[t] - log_z);
  }
  return q;
}

Distribution apply_temperature(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0)) throw InvalidArgument("apply_temperature: temperature must be > 0");
  std::vector<double> scaled(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) scaled[i] = logits[i] / temperature;
  return model::softmax(scaled);
}

std::vector<double> apply_repetition_penalty(std::span<const double> logits, std::span<const TokenId> history,
                                             double penalty) {
  if (!(penalty >= 1.0)) throw InvalidArgument("apply_repetition_penalty: penalty must be >= 1");
  std::vector<double> out(logits.begin(), logits.end());
  const std::set<TokenId> seen(history.begin(), history.end());
  for (TokenId t : seen) {
    if (t < 0 || static_cast<std::size_t>(t) >= out.size()) continue;
    double& v = out[static_cast<std::size_t>(t)];
    v = v > 0.0 ? v / penalty : v * penalty;
  }
  return out;
}

namespace {

std::vector<std::size_t> order_by_prob(std::span<const double> dist) {
  std::vector<std::size_t> idx(dist.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return dist[a] > dist[b]; });
  return idx;
}

}  // namespace

Distribution filter_top_k_top_p(std::span<const double> dist, int k, double p) {
  if (k < 1) throw InvalidArgument("filter_top_k_top_p: k must be >= 1");
  if (!(p > 0.0 && p <= 1.0)) throw InvalidArgument("filter_top_k_top_p: p must lie in (0, 1]");
  if (dist.empty()) return {};
  const std::vector<std::size_t> idx = order_by_prob(dist);
  const double total = std::accumulate(dist.begin(), dist.end(), 0.0);
  std::size_t nucleus = 0;
  double cum = 0.0;
  while (nucleus < idx.size()) {
    cum += dist[idx[nucleus]];
    ++nucleus;
    if (cum >= p * total - 1e-12) break;
  }
  std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(k), nucleus);
  keep = std::max<std::size_t>(keep, 1);
  Distribution out(dist.size(), 0.0);
  double mass = 0.0;
  for (std::size_t i = 0; i < keep; ++i) mass += dist[idx[i]];
  if (!(mass > 0.0)) {
    out[idx[0]] = 1.0;
    return out;
  }
  for (std::size_t i = 0; i < keep; ++i) out[idx[i]] = dist[idx[i]] / mass;
  return out;
}

std::vector<Strategy> predict_strategy(std::span<const double> p_first_step) {
  if (p_first_step.size() < Vocabulary::kNumSpecials) throw InvalidArgument("predict_strategy: distribution too short");
  std::vector<Strategy> ranked(corpus::kAllStrategies.begin(), corpus::kAllStrategies.end());
  auto prob = [&](Strategy s) { return p_first_step[static_cast<std::size_t>(Vocabulary::strategy_id(s))]; };
  std::stable_sort(ranked.begin(), ranked.end(), [&](Strategy a, Strategy b) { return prob(a) > prob(b); });
  return ranked;
}

double entropy(std::span<const double> dist) {
  double h = 0.0;
  for (double p : dist) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

std::size_t sample_index(std::span<const double> dist, double uniform) {
  const double total = std::accumulate(dist.begin(), dist.end(), 0.0);
  const double target = uniform * total;
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] <= 0.0) continue;
    last_positive = i;
    cum += dist[i];
    if (target < cum) return i;
  }
  return last_positive;
}

Distribution next_token_distribution(std::span<const double> logits_full, std::span<const double> logits_ctx,
                                     std::span<const TokenId> history, double alpha, const DecodeConfig& cfg,
                                     const AdjustFn& adjust) {
  const Distribution p_full = apply_temperature(logits_full, cfg.temperature);
  const Distribution p_ctx = apply_temperature(logits_ctx, cfg.temperature);
  const Distribution q = adjust ? adjust(p_full, p_ctx, alpha) : contrastive_adjust(p_full, p_ctx, alpha);
  std::vector<double> logq(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) logq[i] = q[i] > 0.0 ? std::log(q[i]) : kNegInf;
  const std::vector<double> penalised = apply_repetition_penalty(logq, history, cfg.repetition_penalty);
  return filter_top_k_top_p(model::softmax(penalised), cfg.top_k, cfg.top_p);
}

namespace {

std::vector<double> last_row(const model::Mat& logits) {
  const Eigen::Index r = logits.rows() - 1;
  std::vector<double> out(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index j = 0; j < logits.cols(); ++j) out[static_cast<std::size_t>(j)] = logits(r, j);
  return out;
}

// Response steps never emit padding, BOS, SEP or a second strategy token.
void mask_response_specials(std::vector<double>& logits) {
  for (TokenId t : {Vocabulary::kPad, Vocabulary::kBos, Vocabulary::kSep}) logits[static_cast<std::size_t>(t)] = kNegInf;
  for (Strategy s : corpus::kAllStrategies) logits[static_cast<std::size_t>(Vocabulary::strategy_id(s))] = kNegInf;
}

}  // namespace

GenerationResult generate(const model::Model& model, std::span<const corpus::Utterance> dialogue,
                          const persona::PersonaSet& persona, const DecodeConfig& cfg,
                          std::optional<Strategy> forced_strategy, const GenerateOptions& options) {
  cfg.validate();
  if (dialogue.empty()) throw InvalidArgument("generate: empty dialogue");
  const auto& vocab = model.vocab();
  const auto max_len = static_cast<std::size_t>(model.config().max_len);
  const std::vector<TokenId> dialogue_ids = model::encode_dialogue(vocab, dialogue, max_len);
  if (dialogue_ids.empty()) throw InvalidArgument("generate: dialogue has no tokens");
  const std::vector<TokenId> persona_ids = model::encode_persona(vocab, persona, max_len);

  const model::Mat h_ctx = model::encode(model, dialogue_ids);
  const model::Mat h_full = model::fuse_with_persona(model, h_ctx, persona_ids);
  const bool same_pathway = persona_ids.empty();

  GenerationResult result;
  Rng rng(cfg.seed);

  // Step 0: strategy token from the full pathway, no contrastive term.
  std::vector<TokenId> prefix = {Vocabulary::kBos};
  const std::vector<double> first_logits = last_row(model::decoder_logits(model, h_full, prefix));
  const Distribution first = model::softmax(first_logits);
  {
    double strat_mass = 0.0;
    for (Strategy s : corpus::kAllStrategies) strat_mass += first[static_cast<std::size_t>(Vocabulary::strategy_id(s))];
    for (Strategy s : predict_strategy(first)) {
      const double p = first[static_cast<std::size_t>(Vocabulary::strategy_id(s))];
      result.strategy_ranking.emplace_back(s, strat_mass > 0.0 ? p / strat_mass : 0.0);
    }
  }
  if (forced_strategy) {
    result.strategy = *forced_strategy;
    result.forced = true;
  } else {
    std::vector<double> strat_logits(corpus::kNumStrategies);
    for (Strategy s : corpus::kAllStrategies) {
      strat_logits[corpus::index_of(s)] = first_logits[static_cast<std::size_t>(Vocabulary::strategy_id(s))];
    }
    const Distribution d = filter_top_k_top_p(apply_temperature(strat_logits, cfg.temperature), cfg.top_k, cfg.top_p);
    result.strategy = corpus::kAllStrategies[sample_index(d, uniform01(rng))];
  }
  result.alpha_used = cfg.alpha_override ? *cfg.alpha_override : alpha_for(result.strategy, cfg.alpha_table);
  prefix.push_back(Vocabulary::strategy_id(result.strategy));

  for (int step = 0; step < cfg.max_new_tokens && prefix.size() < max_len; ++step) {
    std::vector<double> lf = last_row(model::decoder_logits(model, h_full, prefix));
    std::vector<double> lc = same_pathway ? lf : last_row(model::decoder_logits(model, h_ctx, prefix));
    mask_response_specials(lf);
    mask_response_specials(lc);
    const Distribution d = next_token_distribution(lf, lc, result.tokens, result.alpha_used, cfg, options.adjust);
    const auto tok = static_cast<TokenId>(sample_index(d, uniform01(rng)));
    if (options.trace) {
      StepTrace st;
      st.token = tok;
      st.entropy_full = entropy(apply_temperature(lf, cfg.temperature));
      st.entropy_ctx = entropy(apply_temperature(lc, cfg.temperature));
      if (options.trace_distributions) st.distribution = d;
      result.trace.push_back(std::move(st));
    }
    if (tok == Vocabulary::kEos) break;
    result.tokens.push_back(tok);
    prefix.push_back(tok);
  }
  result.text = vocab.decode(result.tokens);
  return result;
}

nlohmann::json trace_to_json(const GenerationResult& r, const corpus::Vocabulary& vocab) {
  nlohmann::json ranking = nlohmann::json::array();
  for (const auto& [s, p] : r.strategy_ranking) ranking.push_back({{"strategy", corpus::display_name(s)}, {"probability", p}});
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& st : r.trace) {
    nlohmann::json j = {{"token", st.token},
                        {"text", vocab.token(st.token)},
                        {"entropy_full", st.entropy_full},
                        {"entropy_ctx", st.entropy_ctx}};
    if (!st.distribution.empty()) j["distribution"] = st.distribution;
    steps.push_back(std::move(j));
  }
  return {{"strategy", corpus::display_name(r.strategy)},
          {"forced", r.forced},
          {"alpha_used", r.alpha_used},
          {"text", r.text},
          {"tokens", r.tokens},
          {"strategy_ranking", ranking},
          {"steps", steps}};
}

}  // namespace esd::decode
