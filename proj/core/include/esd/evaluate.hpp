#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "esd/decode.hpp"
#include "esd/examples.hpp"
#include "esd/metrics.hpp"

namespace esd::metrics {

struct EvalItem {
  model::GoldTurn gold;
  decode::GenerationResult generated;
};

struct Evaluation {
  MetricReport report;
  std::vector<EvalItem> items;
};

struct EvaluateOptions {
  decode::AdjustFn adjust;  // empty = contrastive_adjust
};

/// Generates one response per gold turn with seed derive_seed(cfg.seed, i),
/// ranks strategies on the same pass, and computes every metric. The response
/// vocabulary size for EAD is the model's word count (reserved ids excluded).
Evaluation evaluate(const model::Model& model, const std::vector<model::GoldTurn>& gold,
                    const decode::DecodeConfig& cfg, const Embedder& embedder, const EvaluateOptions& options = {});

/// Generated texts one per line as JSON objects with the gold fields.
nlohmann::json items_to_json(const std::vector<EvalItem>& items);

}  // namespace esd::metrics
