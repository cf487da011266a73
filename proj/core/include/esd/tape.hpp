#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace esd::model {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Handle to a value recorded on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode differentiation over dense double matrices. Every op appends a
/// node; backward() walks them in reverse. A tape built with record=false only
/// evaluates values (inference).
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(Mat value);
  /// Binds an externally owned parameter. The value is referenced, not copied,
  /// and must outlive the tape. After backward() its gradient is added into
  /// `grad_sink` (if non-null).
  Var parameter(const Mat& value, Mat* grad_sink);

  const Mat& value(Var v) const;
  const Mat& grad(Var v) const;

  Var add(Var a, Var b);
  Var add_row(Var a, Var row);                   // a + broadcast 1xC row
  Var scale(Var a, double s);
  Var scale_by(Var a, Var scalars, int index);   // scalars(0, index) * a
  Var matmul(Var a, Var b);                      // a * b
  Var matmul_nt(Var a, Var b);                   // a * b^T
  /// Row-wise softmax of (s * a), with an upper-triangular -inf mask when
  /// `causal` is set (row i sees columns 0..i).
  Var softmax_rows(Var a, double s = 1.0, bool causal = false);
  /// Row-wise LayerNorm; `gain`/`bias` are 1xC and may be invalid (no affine).
  Var layernorm(Var x, Var gain, Var bias, double eps);
  Var gelu(Var a);
  Var gather_rows(Var table, std::span<const int> rows);
  Var slice_rows(Var a, int start, int count);
  Var slice_cols(Var a, int start, int count);
  Var concat_cols(const std::vector<Var>& parts);
  Var mean_rows(Var a);                          // 1xC
  Var broadcast_rows(Var row, int count);        // count x C
  /// sum_i weights[i] * -log softmax(logits.row(i))[targets[i]], as 1x1.
  Var weighted_nll(Var logits, std::span<const int> targets, std::span<const double> weights);

  /// Seeds d(out)/d(out) = 1 for the 1x1 `out` and propagates.
  void backward(Var out);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    const Mat* external = nullptr;
    Mat grad;
    Mat* sink = nullptr;
    bool needs_grad = false;
    std::function<void()> back;
  };

  Var push(Mat value, bool needs_grad);
  Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }
  const Node& node(Var v) const { return nodes_[static_cast<std::size_t>(v.id)]; }
  bool needs(Var v) const { return record_ && node(v).needs_grad; }
  Mat& grad_ref(Var v);  // zero-initialised on first use

  bool record_;
  std::vector<Node> nodes_;
};

}  // namespace esd::model
