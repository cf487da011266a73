#include "esd/evaluate.hpp"

#include <algorithm>

#include "esd/error.hpp"
#include "esd/random.hpp"
#include "esd/text.hpp"

namespace esd::metrics {

namespace {

double safe_distinct(const std::vector<Tokens>& hyps, std::size_t n) {
  std::size_t total = 0;
  for (const auto& h : hyps) total += ngram_count(h, n);
  return total == 0 ? 0.0 : distinct_n(hyps, n);
}

}  // namespace

Evaluation evaluate(const model::Model& model, const std::vector<model::GoldTurn>& gold,
                    const decode::DecodeConfig& cfg, const Embedder& embedder, const EvaluateOptions& options) {
  if (gold.empty()) throw InvalidArgument("evaluate: no gold turns");
  cfg.validate();
  const auto& vocab = model.vocab();
  const std::size_t max_len = static_cast<std::size_t>(model.config().max_len);

  Evaluation ev;
  std::vector<std::vector<corpus::Strategy>> rankings;
  std::vector<corpus::Strategy> gold_strategies;
  std::vector<Tokens> hyps;
  double bleu2 = 0.0, bleu4 = 0.0, rl = 0.0, cos = 0.0;
  std::size_t n_persona = 0;

  decode::GenerateOptions gen_opts;
  gen_opts.adjust = options.adjust;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto& g = gold[i];
    decode::DecodeConfig item_cfg = cfg;
    item_cfg.seed = derive_seed(cfg.seed, i);
    decode::GenerationResult r = decode::generate(model, g.context, g.persona, item_cfg, std::nullopt, gen_opts);

    std::vector<corpus::Strategy> ranking;
    for (const auto& [s, p] : r.strategy_ranking) ranking.push_back(s);
    rankings.push_back(std::move(ranking));
    gold_strategies.push_back(g.strategy);

    Tokens hyp;
    for (auto id : r.tokens) hyp.push_back(vocab.token(id));
    const Tokens ref = text::tokenize(g.response);
    bleu2 += bleu_n(hyp, ref, 2);
    bleu4 += bleu_n(hyp, ref, 4);
    rl += rouge_l(hyp, ref);
    if (!g.persona.empty()) {
      cos += persona_response_similarity({r.text}, g.persona, embedder);
      ++n_persona;
    }
    hyps.push_back(std::move(hyp));
    ev.items.push_back({g, std::move(r)});
  }

  const double n = static_cast<double>(gold.size());
  MetricReport& rep = ev.report;
  for (std::size_t k = 1; k <= corpus::kNumStrategies; ++k) rep.acc_top[k] = strategy_accuracy(rankings, gold_strategies, k);
  rep.ppl = perplexity(model, model::to_examples(gold, vocab, max_len));
  rep.bleu[2] = bleu2 / n;
  rep.bleu[4] = bleu4 / n;
  const std::size_t words = vocab.size() - corpus::Vocabulary::kNumSpecials;
  for (std::size_t k : {1u, 2u}) {
    rep.distinct[k] = safe_distinct(hyps, k);
    rep.ead[k] = ead_n(hyps, k, std::max<std::size_t>(words, 1));
  }
  rep.rouge_l = rl / n;
  rep.cos_sim = n_persona == 0 ? 0.0 : cos / static_cast<double>(n_persona);
  rep.n_items = gold.size();
  rep.n_persona_items = n_persona;
  return ev;
}

nlohmann::json items_to_json(const std::vector<EvalItem>& items) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& it : items) {
    out.push_back({{"conversation", it.gold.conversation},
                   {"turn", it.gold.turn},
                   {"gold_strategy", corpus::display_name(it.gold.strategy)},
                   {"gold_response", it.gold.response},
                   {"persona", it.gold.persona.sentences},
                   {"strategy", corpus::display_name(it.generated.strategy)},
                   {"alpha_used", it.generated.alpha_used},
                   {"response", it.generated.text}});
  }
  return out;
}

}  // namespace esd::metrics
