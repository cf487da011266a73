#include "esd/model.hpp"

#include <cmath>
#include <limits>

#include "esd/error.hpp"
#include "esd/random.hpp"

namespace esd::model {

void ModelConfig::validate() const {
  if (d_model < 1 || n_heads < 1 || n_layers < 0 || d_ff < 1 || max_len < 2) {
    throw InvalidArgument("model config: sizes must be positive");
  }
  if (d_model % n_heads != 0) throw InvalidArgument("model config: d_model must be divisible by n_heads");
  if (!(layernorm_eps > 0.0)) throw InvalidArgument("model config: layernorm_eps must be positive");
}

// ---------------------------------------------------------------------------
// ParamSet

void ParamSet::add(std::string name, Mat value) {
  if (index_.count(name)) throw InvalidArgument("duplicate parameter '" + name + "'");
  index_.emplace(name, tensors_.size());
  tensors_.push_back({std::move(name), std::move(value)});
}

bool ParamSet::contains(std::string_view name) const { return index_.count(std::string(name)) > 0; }

std::size_t ParamSet::index(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw NotFound("no parameter named '" + std::string(name) + "'");
  return it->second;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (const auto& t : tensors_) out.add(t.name, Mat::Zero(t.value.rows(), t.value.cols()));
  return out;
}

void ParamSet::set_zero() {
  for (auto& t : tensors_) t.value.setZero();
}

std::size_t ParamSet::num_scalars() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value.size());
  return n;
}

bool ParamSet::all_finite() const {
  for (const auto& t : tensors_) {
    if (!t.value.allFinite()) return false;
  }
  return true;
}

bool ParamSet::operator==(const ParamSet& other) const {
  if (tensors_.size() != other.tensors_.size()) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const auto& a = tensors_[i];
    const auto& b = other.tensors_[i];
    if (a.name != b.name || a.value.rows() != b.value.rows() || a.value.cols() != b.value.cols() ||
        a.value != b.value) {
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// FusionWeights / Example

std::array<double, 3> FusionWeights::lambdas() const {
  const double m = std::max({w[0], w[1], w[2]});
  std::array<double, 3> e = {std::exp(w[0] - m), std::exp(w[1] - m), std::exp(w[2] - m)};
  const double z = e[0] + e[1] + e[2];
  return {e[0] / z, e[1] / z, e[2] / z};
}

FusionWeights FusionWeights::from_row(const Mat& row) {
  if (row.size() != 3) throw InvalidArgument("fusion weights need exactly 3 entries");
  return FusionWeights{{row(0, 0), row(0, 1), row(0, 2)}};
}

std::vector<TokenId> Example::decoder_input() const {
  std::vector<TokenId> out = {corpus::Vocabulary::kBos, corpus::Vocabulary::strategy_id(strategy)};
  out.insert(out.end(), response.begin(), response.end());
  return out;
}

std::vector<TokenId> Example::targets() const {
  std::vector<TokenId> out = {corpus::Vocabulary::strategy_id(strategy)};
  out.insert(out.end(), response.begin(), response.end());
  out.push_back(corpus::Vocabulary::kEos);
  return out;
}

// ---------------------------------------------------------------------------
// Model

namespace {

Mat gaussian(Rng& rng, int rows, int cols, double stddev) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal01(rng) * stddev;
  return m;
}

void add_layernorm(ParamSet& p, const std::string& prefix, int d) {
  p.add(prefix + ".g", Mat::Ones(1, d));
  p.add(prefix + ".b", Mat::Zero(1, d));
}

void add_attention(ParamSet& p, Rng& rng, const std::string& prefix, int d) {
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  for (const char* w : {".wq", ".wk", ".wv", ".wo"}) p.add(prefix + w, gaussian(rng, d, d, s));
}

void add_ffn(ParamSet& p, Rng& rng, const std::string& prefix, int d, int ff) {
  p.add(prefix + ".w1", gaussian(rng, d, ff, 1.0 / std::sqrt(static_cast<double>(d))));
  p.add(prefix + ".b1", Mat::Zero(1, ff));
  p.add(prefix + ".w2", gaussian(rng, ff, d, 1.0 / std::sqrt(static_cast<double>(ff))));
  p.add(prefix + ".b2", Mat::Zero(1, d));
}

}  // namespace

ParamSet Model::initial_params(const ModelConfig& cfg) {
  cfg.validate();
  const int d = cfg.d_model;
  const int v = static_cast<int>(cfg.vocab.size());
  Rng rng(cfg.seed);
  ParamSet p;
  p.add("tok_emb", gaussian(rng, v, d, 0.3));
  p.add("pos_enc", gaussian(rng, cfg.max_len, d, 0.1));
  p.add("pos_dec", gaussian(rng, cfg.max_len, d, 0.1));
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string pre = "enc." + std::to_string(l);
    add_layernorm(p, pre + ".ln1", d);
    add_attention(p, rng, pre + ".attn", d);
    add_layernorm(p, pre + ".ln2", d);
    add_ffn(p, rng, pre + ".ffn", d, cfg.d_ff);
  }
  add_layernorm(p, "enc.ln_f", d);
  add_layernorm(p, "fuse.ln_d", d);
  add_layernorm(p, "fuse.ln_p", d);
  p.add("fuse.w", Mat::Zero(1, 3));
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string pre = "dec." + std::to_string(l);
    add_layernorm(p, pre + ".ln1", d);
    add_attention(p, rng, pre + ".self", d);
    add_layernorm(p, pre + ".ln2", d);
    add_attention(p, rng, pre + ".cross", d);
    add_layernorm(p, pre + ".ln3", d);
    add_ffn(p, rng, pre + ".ffn", d, cfg.d_ff);
  }
  add_layernorm(p, "dec.ln_f", d);
  p.add("out.w", gaussian(rng, d, v, 1.0 / std::sqrt(static_cast<double>(d))));
  p.add("out.b", Mat::Zero(1, v));
  return p;
}

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)), params_(initial_params(cfg_)) {}

Model::Model(ModelConfig cfg, ParamSet params) : cfg_(std::move(cfg)), params_(std::move(params)) {
  const ParamSet expected = initial_params(cfg_);
  if (expected.size() != params_.size()) throw ValidationError("model: parameter count does not match config");
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& e = expected.at(i);
    if (!params_.contains(e.name)) throw ValidationError("model: missing parameter '" + e.name + "'");
    const Mat& got = params_[e.name];
    if (got.rows() != e.value.rows() || got.cols() != e.value.cols()) {
      throw ValidationError("model: parameter '" + e.name + "' has the wrong shape");
    }
  }
  if (!params_.all_finite()) throw ValidationError("model: non-finite parameter values");
}

// ---------------------------------------------------------------------------
// Graph blocks

Binder::Binder(Tape& tape, const Model& model, ParamSet* grads)
    : tape_(tape), model_(model), grads_(grads), bound_(model.params().size()) {}

Var Binder::operator()(std::string_view name) {
  const std::size_t i = model_.params().index(name);
  if (!bound_[i].valid()) {
    Mat* sink = grads_ ? &grads_->at(i).value : nullptr;
    bound_[i] = tape_.parameter(model_.params().at(i).value, sink);
  }
  return bound_[i];
}

namespace {

std::vector<int> as_rows(std::span<const TokenId> tokens) { return {tokens.begin(), tokens.end()}; }

void check_tokens(const Model& model, std::span<const TokenId> tokens, const char* what) {
  if (tokens.empty()) throw InvalidArgument(std::string(what) + ": empty token sequence");
  if (tokens.size() > static_cast<std::size_t>(model.config().max_len)) {
    throw InvalidArgument(std::string(what) + ": sequence of " + std::to_string(tokens.size()) +
                          " tokens exceeds max_len " + std::to_string(model.config().max_len));
  }
  for (TokenId t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= model.vocab_size()) {
      throw InvalidArgument(std::string(what) + ": token id " + std::to_string(t) + " out of range");
    }
  }
}

Var layer_norm(Binder& b, Var x, const std::string& prefix) {
  return b.tape().layernorm(x, b(prefix + ".g"), b(prefix + ".b"), b.model().config().layernorm_eps);
}

Var attention(Binder& b, const std::string& prefix, Var queries, Var keys_values, bool causal) {
  Tape& t = b.tape();
  const int heads = b.model().config().n_heads;
  const int dh = b.model().config().d_model / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Var q = t.matmul(queries, b(prefix + ".wq"));
  Var k = t.matmul(keys_values, b(prefix + ".wk"));
  Var v = t.matmul(keys_values, b(prefix + ".wv"));
  std::vector<Var> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Var qh = heads == 1 ? q : t.slice_cols(q, h * dh, dh);
    Var kh = heads == 1 ? k : t.slice_cols(k, h * dh, dh);
    Var vh = heads == 1 ? v : t.slice_cols(v, h * dh, dh);
    Var a = t.softmax_rows(t.matmul_nt(qh, kh), scale, causal);
    outs.push_back(t.matmul(a, vh));
  }
  Var cat = heads == 1 ? outs[0] : t.concat_cols(outs);
  return t.matmul(cat, b(prefix + ".wo"));
}

Var feed_forward(Binder& b, const std::string& prefix, Var x) {
  Tape& t = b.tape();
  Var h = t.gelu(t.add_row(t.matmul(x, b(prefix + ".w1")), b(prefix + ".b1")));
  return t.add_row(t.matmul(h, b(prefix + ".w2")), b(prefix + ".b2"));
}

Var embed(Binder& b, std::span<const TokenId> tokens, const char* positions) {
  Tape& t = b.tape();
  const std::vector<int> rows = as_rows(tokens);
  Var tok = t.gather_rows(b("tok_emb"), rows);
  Var pos = t.slice_rows(b(positions), 0, static_cast<int>(tokens.size()));
  return t.add(tok, pos);
}

}  // namespace

Var encode_graph(Binder& b, std::span<const TokenId> tokens) {
  check_tokens(b.model(), tokens, "encode");
  Tape& t = b.tape();
  Var x = embed(b, tokens, "pos_enc");
  for (int l = 0; l < b.model().config().n_layers; ++l) {
    const std::string pre = "enc." + std::to_string(l);
    Var h = layer_norm(b, x, pre + ".ln1");
    x = t.add(x, attention(b, pre + ".attn", h, h, false));
    x = t.add(x, feed_forward(b, pre + ".ffn", layer_norm(b, x, pre + ".ln2")));
  }
  return layer_norm(b, x, "enc.ln_f");
}

FusedGraph cross_fuse_graph(Tape& tape, Var h_dialogue, Var h_persona, Var gain_d, Var bias_d, Var gain_p,
                            Var bias_p, double eps) {
  const Mat& hd = tape.value(h_dialogue);
  const Mat& hp = tape.value(h_persona);
  if (hp.rows() == 0) throw InvalidArgument("cross_fuse: persona has no rows; use the empty-persona bypass");
  if (hd.rows() == 0) throw InvalidArgument("cross_fuse: dialogue has no rows");
  if (hd.cols() != hp.cols()) throw InvalidArgument("cross_fuse: hidden sizes differ");
  FusedGraph out;
  out.attn_dialogue = tape.softmax_rows(tape.matmul_nt(h_dialogue, h_persona));
  Var z_d = tape.matmul(out.attn_dialogue, h_persona);
  out.fused_dialogue = tape.layernorm(tape.add(h_dialogue, z_d), gain_d, bias_d, eps);
  out.attn_persona = tape.softmax_rows(tape.matmul_nt(h_persona, h_dialogue));
  Var z_p = tape.matmul(out.attn_persona, h_dialogue);
  out.fused_persona = tape.layernorm(tape.add(h_persona, z_p), gain_p, bias_p, eps);
  return out;
}

Var combine_graph(Tape& tape, Var fused_dialogue, Var fused_persona, Var h_dialogue, Var fusion_w) {
  const Mat& fd = tape.value(fused_dialogue);
  const Mat& hd = tape.value(h_dialogue);
  if (fd.rows() != hd.rows() || fd.cols() != hd.cols()) throw InvalidArgument("combine: shape mismatch");
  if (tape.value(fused_persona).cols() != hd.cols()) throw InvalidArgument("combine: persona width mismatch");
  const int n = static_cast<int>(hd.rows());
  Var lambdas = tape.softmax_rows(fusion_w);
  Var pooled = tape.broadcast_rows(tape.mean_rows(fused_persona), n);
  Var sum = tape.add(tape.scale_by(fused_dialogue, lambdas, 0), tape.scale_by(pooled, lambdas, 1));
  return tape.add(sum, tape.scale_by(h_dialogue, lambdas, 2));
}

Var final_hidden_graph(Binder& b, std::span<const TokenId> dialogue, std::span<const TokenId> persona) {
  Var hd = encode_graph(b, dialogue);
  if (persona.empty()) return hd;
  Var hp = encode_graph(b, persona);
  const double eps = b.model().config().layernorm_eps;
  FusedGraph f = cross_fuse_graph(b.tape(), hd, hp, b("fuse.ln_d.g"), b("fuse.ln_d.b"), b("fuse.ln_p.g"),
                                  b("fuse.ln_p.b"), eps);
  return combine_graph(b.tape(), f.fused_dialogue, f.fused_persona, hd, b("fuse.w"));
}

Var decoder_logits_graph(Binder& b, Var h_final, std::span<const TokenId> prefix) {
  check_tokens(b.model(), prefix, "decoder");
  Tape& t = b.tape();
  Var x = embed(b, prefix, "pos_dec");
  for (int l = 0; l < b.model().config().n_layers; ++l) {
    const std::string pre = "dec." + std::to_string(l);
    Var h = layer_norm(b, x, pre + ".ln1");
    x = t.add(x, attention(b, pre + ".self", h, h, true));
    x = t.add(x, attention(b, pre + ".cross", layer_norm(b, x, pre + ".ln2"), h_final, false));
    x = t.add(x, feed_forward(b, pre + ".ffn", layer_norm(b, x, pre + ".ln3")));
  }
  x = layer_norm(b, x, "dec.ln_f");
  return t.add_row(t.matmul(x, b("out.w")), b("out.b"));
}

// ---------------------------------------------------------------------------
// Value-level API

Mat encode(const Model& model, std::span<const TokenId> tokens) {
  Tape tape(false);
  Binder b(tape, model);
  return tape.value(encode_graph(b, tokens));
}

CrossFused cross_fuse(const Mat& h_dialogue, const Mat& h_persona, double eps) {
  Tape tape(false);
  Var hd = tape.constant(h_dialogue);
  Var hp = tape.constant(h_persona);
  FusedGraph f = cross_fuse_graph(tape, hd, hp, Var{}, Var{}, Var{}, Var{}, eps);
  return {tape.value(f.fused_dialogue), tape.value(f.fused_persona), tape.value(f.attn_dialogue),
          tape.value(f.attn_persona)};
}

Mat combine_with(const Mat& fused_dialogue, const Mat& fused_persona, const Mat& h_dialogue,
                 const std::array<double, 3>& lambdas) {
  if (fused_dialogue.rows() != h_dialogue.rows() || fused_dialogue.cols() != h_dialogue.cols()) {
    throw InvalidArgument("combine: shape mismatch");
  }
  if (fused_persona.rows() == 0 || fused_persona.cols() != h_dialogue.cols()) {
    throw InvalidArgument("combine: persona shape mismatch");
  }
  const Eigen::RowVectorXd pooled = fused_persona.colwise().mean();
  Mat out = lambdas[0] * fused_dialogue + lambdas[2] * h_dialogue;
  out.rowwise() += lambdas[1] * pooled;
  return out;
}

Mat combine(const Mat& fused_dialogue, const Mat& fused_persona, const Mat& h_dialogue, const FusionWeights& w) {
  Tape tape(false);
  Mat wrow(1, 3);
  wrow << w.w[0], w.w[1], w.w[2];
  Var out = combine_graph(tape, tape.constant(fused_dialogue), tape.constant(fused_persona),
                          tape.constant(h_dialogue), tape.constant(wrow));
  return tape.value(out);
}

Mat final_hidden(const Model& model, std::span<const TokenId> dialogue, std::span<const TokenId> persona) {
  Tape tape(false);
  Binder b(tape, model);
  return tape.value(final_hidden_graph(b, dialogue, persona));
}

Mat fuse_with_persona(const Model& model, const Mat& h_dialogue, std::span<const TokenId> persona) {
  if (persona.empty()) return h_dialogue;
  Tape tape(false);
  Binder b(tape, model);
  Var hd = tape.constant(h_dialogue);
  Var hp = encode_graph(b, persona);
  FusedGraph f = cross_fuse_graph(tape, hd, hp, b("fuse.ln_d.g"), b("fuse.ln_d.b"), b("fuse.ln_p.g"),
                                  b("fuse.ln_p.b"), model.config().layernorm_eps);
  return tape.value(combine_graph(tape, f.fused_dialogue, f.fused_persona, hd, b("fuse.w")));
}

Mat decoder_logits(const Model& model, const Mat& h_final, std::span<const TokenId> prefix) {
  if (h_final.cols() != model.config().d_model || h_final.rows() == 0) {
    throw InvalidArgument("decoder: H_final has the wrong shape");
  }
  Tape tape(false);
  Binder b(tape, model);
  return tape.value(decoder_logits_graph(b, tape.constant(h_final), prefix));
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  double m = -std::numeric_limits<double>::infinity();
  for (double v : logits) m = std::max(m, v);
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::isinf(logits[i]) && logits[i] < 0 ? 0.0 : std::exp(logits[i] - m);
    z += out[i];
  }
  for (double& p : out) p /= z;
  return out;
}

std::vector<double> decoder_step(const Model& model, const Mat& h_final, std::span<const TokenId> prefix) {
  if (prefix.empty() || prefix.front() != corpus::Vocabulary::kBos) {
    throw InvalidArgument("decoder_step: prefix must start with BOS");
  }
  const Mat logits = decoder_logits(model, h_final, prefix);
  const Eigen::Index last = logits.rows() - 1;
  std::vector<double> row(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index j = 0; j < logits.cols(); ++j) row[static_cast<std::size_t>(j)] = logits(last, j);
  return softmax(row);
}

namespace {

Var loss_graph(Binder& b, const Example& ex, LossScope scope) {
  if (ex.response.empty()) throw InvalidArgument("forward_loss: empty response");
  const std::vector<TokenId> input = ex.decoder_input();
  const std::vector<TokenId> targets = ex.targets();
  Var h = final_hidden_graph(b, ex.dialogue, ex.persona);
  Var logits = decoder_logits_graph(b, h, input);
  const std::size_t first = scope == LossScope::Full ? 0 : 1;
  const double w = 1.0 / static_cast<double>(targets.size() - first);
  std::vector<double> weights(targets.size(), w);
  for (std::size_t i = 0; i < first; ++i) weights[i] = 0.0;
  const std::vector<int> tg(targets.begin(), targets.end());
  return b.tape().weighted_nll(logits, tg, weights);
}

}  // namespace

double forward_loss(const Model& model, const Example& ex, LossScope scope) {
  Tape tape(false);
  Binder b(tape, model);
  return tape.value(loss_graph(b, ex, scope))(0, 0);
}

double forward_backward(const Model& model, const Example& ex, ParamSet& grads, double weight, LossScope scope) {
  Tape tape(true);
  Binder b(tape, model, &grads);
  Var loss = loss_graph(b, ex, scope);
  Var scaled = tape.scale(loss, weight);
  tape.backward(scaled);
  return tape.value(loss)(0, 0);
}

std::vector<double> target_nll(const Model& model, const Example& ex) {
  if (ex.response.empty()) throw InvalidArgument("target_nll: empty response");
  const Mat h = final_hidden(model, ex.dialogue, ex.persona);
  const Mat logits = decoder_logits(model, h, ex.decoder_input());
  const std::vector<TokenId> targets = ex.targets();
  std::vector<double> out(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto row = logits.row(static_cast<Eigen::Index>(i));
    const double m = row.maxCoeff();
    const double lse = m + std::log((row.array() - m).exp().sum());
    out[i] = lse - row(targets[i]);
  }
  return out;
}

}  // namespace esd::model
