#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "esd/strategy.hpp"
#include "esd/tape.hpp"
#include "esd/vocab.hpp"

namespace esd::model {

using corpus::TokenId;

struct ModelConfig {
  int d_model = 64;
  int n_heads = 2;
  int n_layers = 2;
  int d_ff = 128;
  int max_len = 256;
  double layernorm_eps = 1e-5;
  std::uint64_t seed = 0;
  corpus::Vocabulary vocab;

  /// Throws InvalidArgument on inconsistent sizes.
  void validate() const;
};

struct NamedTensor {
  std::string name;
  Mat value;
};

/// Ordered, name-addressable parameter tensors.
class ParamSet {
 public:
  void add(std::string name, Mat value);

  std::size_t size() const { return tensors_.size(); }
  bool contains(std::string_view name) const;
  std::size_t index(std::string_view name) const;

  Mat& operator[](std::string_view name) { return tensors_[index(name)].value; }
  const Mat& operator[](std::string_view name) const { return tensors_[index(name)].value; }
  NamedTensor& at(std::size_t i) { return tensors_.at(i); }
  const NamedTensor& at(std::size_t i) const { return tensors_.at(i); }

  std::vector<NamedTensor>::iterator begin() { return tensors_.begin(); }
  std::vector<NamedTensor>::iterator end() { return tensors_.end(); }
  std::vector<NamedTensor>::const_iterator begin() const { return tensors_.begin(); }
  std::vector<NamedTensor>::const_iterator end() const { return tensors_.end(); }

  ParamSet zeros_like() const;
  void set_zero();
  std::size_t num_scalars() const;
  bool all_finite() const;

  bool operator==(const ParamSet& other) const;

 private:
  std::vector<NamedTensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// The softmax-normalised mixing weights of the three hidden-state streams.
struct FusionWeights {
  std::array<double, 3> w = {0.0, 0.0, 0.0};

  std::array<double, 3> lambdas() const;
  static FusionWeights from_row(const Mat& row);
};

/// A persona-augmented training/scoring item, already tokenized.
struct Example {
  std::vector<TokenId> dialogue;  // u1 SEP u2 SEP ... un
  std::vector<TokenId> persona;   // p1 SEP p2 ... (may be empty)
  corpus::Strategy strategy = corpus::Strategy::Others;
  std::vector<TokenId> response;  // words only; the strategy token and EOS are added here

  /// Decoder input: BOS, strategy token, response.
  std::vector<TokenId> decoder_input() const;
  /// Targets: strategy token, response, EOS.
  std::vector<TokenId> targets() const;
};

enum class LossScope {
  Full,          // strategy token + response + EOS
  ResponseOnly,  // response + EOS (perplexity)
};

/// Encoder-decoder with persona/dialogue cross-attention fusion. Parameters
/// are plain dense matrices; computation goes through a Tape so every pass can
/// be differentiated.
class Model {
 public:
  /// Random initialisation from cfg.seed.
  explicit Model(ModelConfig cfg);
  /// Adopts existing parameters after checking names and shapes.
  Model(ModelConfig cfg, ParamSet params);

  const ModelConfig& config() const { return cfg_; }
  const corpus::Vocabulary& vocab() const { return cfg_.vocab; }
  std::size_t vocab_size() const { return cfg_.vocab.size(); }

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  FusionWeights fusion() const { return FusionWeights::from_row(params_["fuse.w"]); }

  /// Parameter names with shapes implied by a config, in canonical order.
  static ParamSet initial_params(const ModelConfig& cfg);

 private:
  ModelConfig cfg_;
  ParamSet params_;
};

/// Binds a Model's parameters onto one Tape on first use.
class Binder {
 public:
  Binder(Tape& tape, const Model& model, ParamSet* grads = nullptr);

  Tape& tape() { return tape_; }
  const Model& model() const { return model_; }
  Var operator()(std::string_view name);

 private:
  Tape& tape_;
  const Model& model_;
  ParamSet* grads_;
  std::vector<Var> bound_;
};

// Graph-building blocks (differentiable).
Var encode_graph(Binder& b, std::span<const TokenId> tokens);
struct FusedGraph {
  Var fused_dialogue;  // LN(H_D + Z_D)
  Var fused_persona;   // LN(H_P + Z_P)
  Var attn_dialogue;   // rowsoftmax(H_D H_P^T)
  Var attn_persona;    // rowsoftmax(H_P H_D^T)
};
FusedGraph cross_fuse_graph(Tape& tape, Var h_dialogue, Var h_persona, Var gain_d, Var bias_d, Var gain_p,
                            Var bias_p, double eps);
Var combine_graph(Tape& tape, Var fused_dialogue, Var fused_persona, Var h_dialogue, Var fusion_w);
/// H_final for (dialogue, persona); with an empty persona the fusion is
/// skipped and H_final = H_D.
Var final_hidden_graph(Binder& b, std::span<const TokenId> dialogue, std::span<const TokenId> persona);
Var decoder_logits_graph(Binder& b, Var h_final, std::span<const TokenId> prefix);

// Value-level operations.

/// Shared encoder; 1 <= tokens.size() <= max_len.
Mat encode(const Model& model, std::span<const TokenId> tokens);

struct CrossFused {
  Mat fused_dialogue;
  Mat fused_persona;
  Mat attn_dialogue;
  Mat attn_persona;
};

/// Unscaled cross attention in both directions followed by residual LayerNorm
/// without affine parameters. Both inputs need at least one row.
CrossFused cross_fuse(const Mat& h_dialogue, const Mat& h_persona, double eps);

/// lambda1 * fused_dialogue + lambda2 * mean_row(fused_persona) + lambda3 * h_dialogue.
Mat combine(const Mat& fused_dialogue, const Mat& fused_persona, const Mat& h_dialogue, const FusionWeights& w);

/// Same as combine() but with explicit mixing weights (test harness use).
Mat combine_with(const Mat& fused_dialogue, const Mat& fused_persona, const Mat& h_dialogue,
                 const std::array<double, 3>& lambdas);

Mat final_hidden(const Model& model, std::span<const TokenId> dialogue, std::span<const TokenId> persona);

/// H_final from an already-encoded dialogue; returns h_dialogue unchanged for
/// an empty persona.
Mat fuse_with_persona(const Model& model, const Mat& h_dialogue, std::span<const TokenId> persona);

/// Logits for every prefix position (prefix.size() x V).
Mat decoder_logits(const Model& model, const Mat& h_final, std::span<const TokenId> prefix);

/// Next-token distribution after `prefix` (which starts with BOS).
std::vector<double> decoder_step(const Model& model, const Mat& h_final, std::span<const TokenId> prefix);

/// Mean NLL of the targets under teacher forcing.
double forward_loss(const Model& model, const Example& ex, LossScope scope = LossScope::Full);

/// Adds weight * d(loss)/d(params) into grads and returns the loss.
double forward_backward(const Model& model, const Example& ex, ParamSet& grads, double weight = 1.0,
                        LossScope scope = LossScope::Full);

/// Per-target negative log-likelihoods (strategy token first, EOS last).
std::vector<double> target_nll(const Model& model, const Example& ex);

std::vector<double> softmax(std::span<const double> logits);

}  // namespace esd::model
