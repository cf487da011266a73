#include "esd/train.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "esd/examples.hpp"
#include "esd/random.hpp"

namespace esd::train {

using model::Example;
using model::Model;
using model::ParamSet;

void TrainConfig::validate() const {
  if (warmup_steps < 0) throw InvalidArgument("train config: warmup_steps must be >= 0");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw InvalidArgument("train config: betas must lie in (0, 1)");
  }
  if (!(lr_base > 0.0)) throw InvalidArgument("train config: lr_base must be positive");
  if (epochs < 0) throw InvalidArgument("train config: epochs must be >= 0");
  if (batch_size_train < 1 || batch_size_valid < 1) throw InvalidArgument("train config: batch sizes must be >= 1");
  if (weight_decay < 0.0) throw InvalidArgument("train config: weight_decay must be >= 0");
}

TrainConfig preset(std::string_view name) {
  TrainConfig c;
  if (name == "desk") return c;
  if (name == "paper") {
    c.lr_base = 2.5e-5;
    c.epochs = 10;
    c.batch_size_train = 4;
    c.batch_size_valid = 16;
    return c;
  }
  throw InvalidArgument("unknown training preset '" + std::string(name) + "' (expected desk or paper)");
}

double lr_at(int step, const TrainConfig& cfg) {
  if (step < 1) throw InvalidArgument("lr_at: step must be >= 1");
  if (cfg.warmup_steps == 0 || step >= cfg.warmup_steps) return cfg.lr_base;
  return cfg.lr_base * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
}

AdamW::AdamW(const ParamSet& shape, double beta1, double beta2, double eps, double weight_decay)
    : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay), m_(shape.zeros_like()),
      v_(shape.zeros_like()) {}

void AdamW::step(ParamSet& params, const ParamSet& grads, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    model::Mat& p = params.at(i).value;
    const model::Mat& g = grads.at(i).value;
    model::Mat& m = m_.at(i).value;
    model::Mat& v = v_.at(i).value;
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    const auto update = (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps_);
    if (weight_decay_ > 0.0) p.array() -= lr * weight_decay_ * p.array();
    p.array() -= lr * update;
  }
}

double clip_global_norm(ParamSet& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& t : grads) sq += t.value.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& t : grads) t.value *= s;
  }
  return norm;
}

std::string TrainReport::to_csv() const {
  std::string out = "epoch,train_loss,valid_loss,selected\n";
  char buf[128];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%d\n", e.epoch, e.train_loss, e.valid_loss,
                  e.epoch == selected_epoch ? 1 : 0);
    out += buf;
  }
  return out;
}

double validate(const Model& model, const std::vector<Example>& examples) {
  if (examples.empty()) throw InvalidArgument("validate: empty example set");
  double sum = 0.0;
  for (const auto& ex : examples) sum += model::forward_loss(model, ex);
  return sum / static_cast<double>(examples.size());
}

double mean_token_nll(const Model& model, const std::vector<Example>& examples, model::LossScope scope) {
  if (examples.empty()) throw InvalidArgument("mean_token_nll: empty example set");
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& ex : examples) {
    const std::vector<double> nll = model::target_nll(model, ex);
    const std::size_t first = scope == model::LossScope::Full ? 0 : 1;
    for (std::size_t i = first; i < nll.size(); ++i) sum += nll[i];
    count += nll.size() - first;
  }
  return sum / static_cast<double>(count);
}

TrainResult train(const Model& init, const std::vector<Example>& train_set, const std::vector<Example>& valid_set,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw InvalidArgument("train: empty training set");
  if (cfg.epochs > 0 && valid_set.empty()) throw InvalidArgument("train: empty validation set");

  Model current = init;
  TrainResult result{init, {}};
  double best_valid = std::numeric_limits<double>::infinity();

  AdamW opt(current.params(), cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay);
  ParamSet grads = current.params().zeros_like();
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  int step = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    shuffle(std::span<std::size_t>(order), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size_train)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size_train));
      const double weight = 1.0 / static_cast<double>(end - start);
      ++step;
      grads.set_zero();
      for (std::size_t k = start; k < end; ++k) {
        const double loss = model::forward_backward(current, train_set[order[k]], grads, weight);
        if (!std::isfinite(loss)) {
          throw TrainingDiverged("training diverged: non-finite loss at step " + std::to_string(step) +
                                 " (epoch " + std::to_string(epoch) + ")");
        }
        epoch_loss += loss;
      }
      clip_global_norm(grads, cfg.clip_norm);
      opt.step(current.params(), grads, lr_at(step, cfg));
    }
    if (!current.params().all_finite()) {
      throw TrainingDiverged("training diverged: non-finite parameters after step " + std::to_string(step));
    }
    EpochRecord rec{epoch, epoch_loss / static_cast<double>(train_set.size()), validate(current, valid_set)};
    result.report.epochs.push_back(rec);
    if (rec.valid_loss < best_valid) {
      best_valid = rec.valid_loss;
      result.best = current;
      result.report.selected_epoch = epoch;
    }
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

TrainResult train(const Model& init, const corpus::Corpus& train_corpus, const corpus::Corpus& valid_corpus,
                  const TrainConfig& cfg, const persona::Extractor& extractor, const EpochCallback& on_epoch) {
  const auto max_len = static_cast<std::size_t>(init.config().max_len);
  const auto tr = model::to_examples(model::gold_turns(train_corpus, extractor), init.vocab(), max_len);
  const auto va = model::to_examples(model::gold_turns(valid_corpus, extractor), init.vocab(), max_len);
  return train(init, tr, va, cfg, on_epoch);
}

}  // namespace esd::train
