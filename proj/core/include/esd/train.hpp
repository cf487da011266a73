#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "esd/corpus.hpp"
#include "esd/error.hpp"
#include "esd/model.hpp"
#include "esd/persona.hpp"

namespace esd::train {

struct TrainConfig {
  double lr_base = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  double clip_norm = 1.0;  // <= 0 disables clipping
  int warmup_steps = 100;
  int epochs = 300;
  int batch_size_train = 8;
  int batch_size_valid = 16;
  std::uint64_t seed = 0;

  void validate() const;
};

/// "desk": lr 3e-3, batch 8, 300 epochs. "paper": lr 2.5e-5, batches 4/16,
/// 10 epochs. Both use betas (0.9, 0.999) and a 100-step linear warmup.
TrainConfig preset(std::string_view name);

/// lr_base * min(1, step / warmup_steps), constant afterwards. step >= 1.
double lr_at(int step, const TrainConfig& cfg);

/// Decoupled-weight-decay Adam over a ParamSet.
class AdamW {
 public:
  AdamW(const model::ParamSet& shape, double beta1, double beta2, double eps, double weight_decay);

  void step(model::ParamSet& params, const model::ParamSet& grads, double lr);
  long steps_taken() const { return t_; }

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  long t_ = 0;
  model::ParamSet m_;
  model::ParamSet v_;
};

/// Scales grads in place so their global L2 norm is at most max_norm; returns
/// the norm before clipping.
double clip_global_norm(model::ParamSet& grads, double max_norm);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double valid_loss = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int selected_epoch = 0;  // 0 = the initial parameters (no epochs run)

  /// "epoch,train_loss,valid_loss,selected" with %.17g numbers.
  std::string to_csv() const;
};

struct TrainResult {
  model::Model best;
  TrainReport report;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mean forward_loss over `examples`. Throws on an empty set.
double validate(const model::Model& model, const std::vector<model::Example>& examples);

/// Token-weighted mean NLL over all targets in scope.
double mean_token_nll(const model::Model& model, const std::vector<model::Example>& examples,
                      model::LossScope scope);

/// Runs cfg.epochs epochs of shuffled mini-batch AdamW with warmup and global
/// norm clipping; returns the parameters of the epoch with the lowest
/// validation loss (earliest on ties).
TrainResult train(const model::Model& init, const std::vector<model::Example>& train_set,
                  const std::vector<model::Example>& valid_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Corpus form: annotates both corpora with `extractor` and trains on every
/// labelled supporter turn.
TrainResult train(const model::Model& init, const corpus::Corpus& train_corpus, const corpus::Corpus& valid_corpus,
                  const TrainConfig& cfg, const persona::Extractor& extractor, const EpochCallback& on_epoch = {});

}  // namespace esd::train
