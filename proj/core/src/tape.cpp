#include "esd/tape.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "esd/error.hpp"

namespace esd::model {

Var Tape::push(Mat value, bool needs_grad) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = record_ && needs_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Mat value) { return push(std::move(value), false); }

Var Tape::parameter(const Mat& value, Mat* grad_sink) {
  Node n;
  n.external = &value;
  n.needs_grad = record_ && grad_sink != nullptr;
  n.sink = grad_sink;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Mat& Tape::value(Var v) const {
  const Node& n = node(v);
  return n.external ? *n.external : n.value;
}

const Mat& Tape::grad(Var v) const { return node(v).grad; }

Mat& Tape::grad_ref(Var v) {
  Node& n = node(v);
  if (n.grad.size() == 0) {
    const Mat& val = value(v);
    n.grad = Mat::Zero(val.rows(), val.cols());
  }
  return n.grad;
}

Var Tape::add(Var a, Var b) {
  if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols()) {
    throw InvalidArgument("tape add: shape mismatch");
  }
  Var out = push(value(a) + value(b), needs(a) || needs(b));
  if (node(out).needs_grad) {
    node(out).back = [this, a, b, out] {
      const Mat& g = grad_ref(out);
      if (needs(a)) grad_ref(a) += g;
      if (needs(b)) grad_ref(b) += g;
    };
  }
  return out;
}

Var Tape::add_row(Var a, Var row) {
  const Mat& av = value(a);
  const Mat& rv = value(row);
  if (rv.rows() != 1 || rv.cols() != av.cols()) throw InvalidArgument("tape add_row: shape mismatch");
  Mat y = av.rowwise() + rv.row(0);
  Var out = push(std::move(y), needs(a) || needs(row));
  if (node(out).needs_grad) {
    node(out).back = [this, a, row, out] {
      const Mat& g = grad_ref(out);
      if (needs(a)) grad_ref(a) += g;
      if (needs(row)) grad_ref(row) += g.colwise().sum();
    };
  }
  return out;
}

Var Tape::scale(Var a, double s) {
  Var out = push(value(a) * s, needs(a));
  if (node(out).needs_grad) {
    node(out).back = [this, a, s, out] { grad_ref(a) += grad_ref(out) * s; };
  }
  return out;
}

Var Tape::scale_by(Var a, Var scalars, int index) {
  const double s = value(scalars)(0, index);
  Var out = push(value(a) * s, needs(a) || needs(scalars));
  if (node(out).needs_grad) {
    node(out).back = [this, a, scalars, index, out] {
      const Mat& g = grad_ref(out);
      if (needs(a)) grad_ref(a) += g * value(scalars)(0, index);
      if (needs(scalars)) grad_ref(scalars)(0, index) += g.cwiseProduct(value(a)).sum();
    };
  }
  return out;
}

Var Tape::matmul(Var a, Var b) {
  if (value(a).cols() != value(b).rows()) throw InvalidArgument("tape matmul: inner dimension mismatch");
  Mat y = value(a) * value(b);
  Var out = push(std::move(y), needs(a) || needs(b));
  if (node(out).needs_grad) {
    node(out).back = [this, a, b, out] {
      const Mat& g = grad_ref(out);
      if (needs(a)) grad_ref(a).noalias() += g * value(b).transpose();
      if (needs(b)) grad_ref(b).noalias() += value(a).transpose() * g;
    };
  }
  return out;
}

Var Tape::matmul_nt(Var a, Var b) {
  if (value(a).cols() != value(b).cols()) throw InvalidArgument("tape matmul_nt: inner dimension mismatch");
  Mat y = value(a) * value(b).transpose();
  Var out = push(std::move(y), needs(a) || needs(b));
  if (node(out).needs_grad) {
    node(out).back = [this, a, b, out] {
      const Mat& g = grad_ref(out);
      if (needs(a)) grad_ref(a).noalias() += g * value(b);
      if (needs(b)) grad_ref(b).noalias() += g.transpose() * value(a);
    };
  }
  return out;
}

Var Tape::softmax_rows(Var a, double s, bool causal) {
  const Mat& x = value(a);
  Mat y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::Index visible = causal ? std::min<Eigen::Index>(i + 1, x.cols()) : x.cols();
    const double m = (x.row(i).head(visible) * s).maxCoeff();
    double z = 0.0;
    for (Eigen::Index j = 0; j < visible; ++j) {
      y(i, j) = std::exp(s * x(i, j) - m);
      z += y(i, j);
    }
    for (Eigen::Index j = 0; j < visible; ++j) y(i, j) /= z;
    for (Eigen::Index j = visible; j < x.cols(); ++j) y(i, j) = 0.0;
  }
  Var out = push(std::move(y), needs(a));
  if (node(out).needs_grad) {
    node(out).back = [this, a, s, out] {
      const Mat& g = grad_ref(out);
      const Mat& yv = value(out);
      const Eigen::VectorXd dots = g.cwiseProduct(yv).rowwise().sum();
      Mat dx = yv.cwiseProduct(g.colwise() - dots);
      grad_ref(a) += dx * s;
    };
  }
  return out;
}

Var Tape::layernorm(Var x, Var gain, Var bias, double eps) {
  const Mat& xv = value(x);
  const Eigen::Index rows = xv.rows();
  const Eigen::Index cols = xv.cols();
  Mat xhat(rows, cols);
  Eigen::VectorXd rstd(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double mu = xv.row(i).mean();
    const double var = (xv.row(i).array() - mu).square().mean();
    rstd(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (xv.row(i).array() - mu) * rstd(i);
  }
  Mat y = xhat;
  if (gain.valid()) y = y.array().rowwise() * value(gain).row(0).array();
  if (bias.valid()) y = y.rowwise() + value(bias).row(0);
  const bool ng = needs(x) || (gain.valid() && needs(gain)) || (bias.valid() && needs(bias));
  Var out = push(std::move(y), ng);
  if (node(out).needs_grad) {
    node(out).back = [this, x, gain, bias, out, xhat = std::move(xhat), rstd = std::move(rstd)] {
      const Mat& g = grad_ref(out);
      if (gain.valid() && needs(gain)) grad_ref(gain) += g.cwiseProduct(xhat).colwise().sum();
      if (bias.valid() && needs(bias)) grad_ref(bias) += g.colwise().sum();
      if (!needs(x)) return;
      Mat dxhat = g;
      if (gain.valid()) dxhat = dxhat.array().rowwise() * value(gain).row(0).array();
      const Eigen::VectorXd mean_d = dxhat.rowwise().mean();
      const Eigen::VectorXd mean_dx = dxhat.cwiseProduct(xhat).rowwise().mean();
      Mat& gx = grad_ref(x);
      for (Eigen::Index i = 0; i < dxhat.rows(); ++i) {
        gx.row(i).array() += rstd(i) * (dxhat.row(i).array() - mean_d(i) - xhat.row(i).array() * mean_dx(i));
      }
    };
  }
  return out;
}

namespace {
constexpr double kGeluC = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);
}  // namespace

Var Tape::gelu(Var a) {
  const Mat& x = value(a);
  Mat y = x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::tanh(kSqrt2OverPi * (v + kGeluC * v * v * v))); });
  Var out = push(std::move(y), needs(a));
  if (node(out).needs_grad) {
    node(out).back = [this, a, out] {
      const Mat d = value(a).unaryExpr([](double v) {
        const double t = std::tanh(kSqrt2OverPi * (v + kGeluC * v * v * v));
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kSqrt2OverPi * (1.0 + 3.0 * kGeluC * v * v);
      });
      grad_ref(a) += grad_ref(out).cwiseProduct(d);
    };
  }
  return out;
}

Var Tape::gather_rows(Var table, std::span<const int> rows) {
  const Mat& t = value(table);
  Mat y(static_cast<Eigen::Index>(rows.size()), t.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= t.rows()) throw InvalidArgument("tape gather_rows: index out of range");
    y.row(static_cast<Eigen::Index>(i)) = t.row(rows[i]);
  }
  Var out = push(std::move(y), needs(table));
  if (node(out).needs_grad) {
    node(out).back = [this, table, out, idx = std::vector<int>(rows.begin(), rows.end())] {
      const Mat& g = grad_ref(out);
      Mat& gt = grad_ref(table);
      for (std::size_t i = 0; i < idx.size(); ++i) gt.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    };
  }
  return out;
}

Var Tape::slice_rows(Var a, int start, int count) {
  const Mat& x = value(a);
  if (start < 0 || count < 0 || start + count > x.rows()) throw InvalidArgument("tape slice_rows: out of range");
  Var out = push(x.middleRows(start, count), needs(a));
  if (node(out).needs_grad) {
    node(out).back = [this, a, start, count, out] { grad_ref(a).middleRows(start, count) += grad_ref(out); };
  }
  return out;
}

Var Tape::slice_cols(Var a, int start, int count) {
  const Mat& x = value(a);
  if (start < 0 || count < 0 || start + count > x.cols()) throw InvalidArgument("tape slice_cols: out of range");
  Var out = push(x.middleCols(start, count), needs(a));
  if (node(out).needs_grad) {
    node(out).back = [this, a, start, count, out] { grad_ref(a).middleCols(start, count) += grad_ref(out); };
  }
  return out;
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidArgument("tape concat_cols: no inputs");
  const Eigen::Index rows = value(parts[0]).rows();
  Eigen::Index cols = 0;
  bool ng = false;
  for (Var p : parts) {
    if (value(p).rows() != rows) throw InvalidArgument("tape concat_cols: row mismatch");
    cols += value(p).cols();
    ng = ng || needs(p);
  }
  Mat y(rows, cols);
  Eigen::Index c = 0;
  for (Var p : parts) {
    y.middleCols(c, value(p).cols()) = value(p);
    c += value(p).cols();
  }
  Var out = push(std::move(y), ng);
  if (node(out).needs_grad) {
    node(out).back = [this, parts, out] {
      const Mat& g = grad_ref(out);
      Eigen::Index off = 0;
      for (Var p : parts) {
        const Eigen::Index w = value(p).cols();
        if (needs(p)) grad_ref(p) += g.middleCols(off, w);
        off += w;
      }
    };
  }
  return out;
}

Var Tape::mean_rows(Var a) {
  const Mat& x = value(a);
  if (x.rows() == 0) throw InvalidArgument("tape mean_rows: empty input");
  Var out = push(x.colwise().mean(), needs(a));
  if (node(out).needs_grad) {
    node(out).back = [this, a, out] {
      const double inv = 1.0 / static_cast<double>(value(a).rows());
      grad_ref(a).rowwise() += grad_ref(out).row(0) * inv;
    };
  }
  return out;
}

Var Tape::broadcast_rows(Var row, int count) {
  const Mat& r = value(row);
  if (r.rows() != 1) throw InvalidArgument("tape broadcast_rows: expected a single row");
  Mat y = r.replicate(count, 1);
  Var out = push(std::move(y), needs(row));
  if (node(out).needs_grad) {
    node(out).back = [this, row, out] { grad_ref(row) += grad_ref(out).colwise().sum(); };
  }
  return out;
}

Var Tape::weighted_nll(Var logits, std::span<const int> targets, std::span<const double> weights) {
  const Mat& z = value(logits);
  if (static_cast<std::size_t>(z.rows()) != targets.size() || targets.size() != weights.size()) {
    throw InvalidArgument("tape weighted_nll: length mismatch");
  }
  Mat probs(z.rows(), z.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    probs.row(i) = (z.row(i).array() - m).exp();
    const double sum = probs.row(i).sum();
    probs.row(i) /= sum;
    const int t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= z.cols()) throw InvalidArgument("tape weighted_nll: target out of range");
    loss += weights[static_cast<std::size_t>(i)] * (m + std::log(sum) - z(i, t));
  }
  Mat y(1, 1);
  y(0, 0) = loss;
  Var out = push(std::move(y), needs(logits));
  if (node(out).needs_grad) {
    node(out).back = [this, logits, out, probs = std::move(probs), tg = std::vector<int>(targets.begin(), targets.end()),
                      w = std::vector<double>(weights.begin(), weights.end())] {
      const double g = grad_ref(out)(0, 0);
      Mat& gz = grad_ref(logits);
      for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        const double wi = w[static_cast<std::size_t>(i)] * g;
        gz.row(i) += probs.row(i) * wi;
        gz(i, tg[static_cast<std::size_t>(i)]) -= wi;
      }
    };
  }
  return out;
}

void Tape::backward(Var out) {
  if (!record_) throw InvalidArgument("tape backward: tape was built without recording");
  const Mat& v = value(out);
  if (v.rows() != 1 || v.cols() != 1) throw InvalidArgument("tape backward: output must be 1x1");
  grad_ref(out)(0, 0) += 1.0;
  for (int i = out.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.back && n.grad.size() != 0) n.back();
  }
  for (auto& n : nodes_) {
    if (n.sink && n.grad.size() != 0) *n.sink += n.grad;
  }
}

}  // namespace esd::model
