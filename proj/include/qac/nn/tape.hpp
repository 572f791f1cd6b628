#pragma once

// Reverse-mode differentiation over dense matrices.
//
// A Tape records every operation of one loss evaluation and is discarded
// afterwards. Values are matrices; a 1x1 matrix is a scalar. Nodes whose
// inputs do not require gradients record no backward closure, so the same
// forward code serves gradient-free evaluation at negligible cost.

#include "qac/core.hpp"

#include <functional>
#include <vector>

namespace qac::nn {

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  bool requires_grad() const;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf node. Parameters pass requires_grad = true, data passes false.
  Var leaf(Matrix value, bool requires_grad = false);
  Var constant(Matrix value) { return leaf(std::move(value), false); }
  Var scalar(double v, bool requires_grad = false);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable node.
  /// Throws ContractError when `loss` is not 1x1.
  void backward(Var loss);

  /// Gradient accumulated at `v`; zeros when nothing reached it.
  Matrix grad(Var v) const;

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Used by op implementations.
  using Backward = std::function<void(Tape&, const Matrix& grad)>;
  Var push(Matrix value, bool requires_grad, Backward backward);
  void accumulate(std::size_t id, const Matrix& contribution);
  template <typename Expr>
  void accumulate_expr(std::size_t id, const Expr& contribution) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
      n.grad = contribution;
    else
      n.grad += contribution;
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape->value(id); }
inline bool Var::requires_grad() const { return tape->requires_grad(id); }

// Linear algebra
Var matmul(Var a, Var b);
Var add_row(Var x, Var row);  // x + broadcast of a 1xC row over all rows
Var concat_cols(Var a, Var b);
Var repeat_rows(Var x, Index times);                 // row r -> rows r*times .. r*times+times-1
Var unflatten_rows(Var column, Index rows, Index cols);  // (rows*cols)x1 -> rows x cols, row-major

// Elementwise
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);  // Hadamard
Var operator*(double s, Var a);
Var operator+(Var a, double s);
Var operator-(Var a);
Var minimum(Var a, Var b);
Var relu(Var x);
Var tanh(Var x);
Var exp(Var x);
Var softplus(Var x);
Var clamp(Var x, double lo, double hi);

// Reductions
Var sum(Var x);
Var mean(Var x);
Var row_sum(Var x);   // R x C -> R x 1
Var row_mean(Var x);  // R x C -> R x 1

/// Batch quantile Huber loss against gradient-opaque target atoms:
///   (1/R) * sum_r (1/T) * sum_i sum_t rho_{taus(r,i)}(targets(r,t) - pred(r,i))
/// pred and taus are R x N, targets R x T.
Var quantile_huber_loss(Var pred, const Matrix& targets, const Matrix& taus, double kappa);

}  // namespace qac::nn
