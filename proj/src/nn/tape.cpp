#include "qac/nn/tape.hpp"

#include "qac/distmath.hpp"

#include <cmath>

namespace qac::nn {

Var Tape::leaf(Matrix value, bool requires_grad) { return push(std::move(value), requires_grad, nullptr); }

Var Tape::scalar(double v, bool requires_grad) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return leaf(std::move(m), requires_grad);
}

Var Tape::push(Matrix value, bool requires_grad, Backward backward) {
  nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, requires_grad ? std::move(backward) : nullptr});
  return Var{this, nodes_.size() - 1};
}

void Tape::accumulate(std::size_t id, const Matrix& contribution) { accumulate_expr(id, contribution); }

void Tape::backward(Var loss) {
  require(loss.tape == this, "backward: loss belongs to a different tape");
  require(loss.rows() == 1 && loss.cols() == 1, "backward: loss must be a scalar (1x1)");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[loss.id].requires_grad) return;
  nodes_[loss.id].grad = Matrix::Ones(1, 1);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && n.grad.size() != 0) {
      // The closure only touches grads of earlier nodes.
      Matrix g = std::move(n.grad);
      n.backward(*this, g);
      nodes_[i].grad = std::move(g);
    }
  }
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

namespace {

bool any_grad(Var a) { return a.requires_grad(); }
bool any_grad(Var a, Var b) { return a.requires_grad() || b.requires_grad(); }

void same_shape(Var a, Var b, const char* op) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(),
                std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                    std::to_string(b.cols()));
}

}  // namespace

Var matmul(Var a, Var b) {
  require_shape(a.cols() == b.rows(), "matmul: inner dimensions differ (" + std::to_string(a.cols()) +
                                          " vs " + std::to_string(b.rows()) + ")");
  Tape& t = *a.tape;
  Matrix out = a.value() * b.value();
  return t.push(std::move(out), any_grad(a, b), [a, b](Tape& tp, const Matrix& g) {
    if (a.requires_grad()) tp.accumulate_expr(a.id, g * b.value().transpose());
    if (b.requires_grad()) tp.accumulate_expr(b.id, a.value().transpose() * g);
  });
}

Var add_row(Var x, Var row) {
  require_shape(row.rows() == 1 && row.cols() == x.cols(), "add_row: row must be 1 x cols(x)");
  Tape& t = *x.tape;
  Matrix out = x.value().rowwise() + row.value().row(0);
  return t.push(std::move(out), any_grad(x, row), [x, row](Tape& tp, const Matrix& g) {
    if (x.requires_grad()) tp.accumulate(x.id, g);
    if (row.requires_grad()) tp.accumulate_expr(row.id, g.colwise().sum());
  });
}

Var concat_cols(Var a, Var b) {
  require_shape(a.rows() == b.rows(), "concat_cols: row counts differ");
  Tape& t = *a.tape;
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  return t.push(std::move(out), any_grad(a, b), [a, b](Tape& tp, const Matrix& g) {
    if (a.requires_grad()) tp.accumulate_expr(a.id, g.leftCols(a.cols()));
    if (b.requires_grad()) tp.accumulate_expr(b.id, g.rightCols(b.cols()));
  });
}

Var repeat_rows(Var x, Index times) {
  require(times >= 1, "repeat_rows: times must be >= 1");
  Tape& t = *x.tape;
  const Matrix& v = x.value();
  Matrix out(v.rows() * times, v.cols());
  for (Index r = 0; r < v.rows(); ++r) out.middleRows(r * times, times).rowwise() = v.row(r);
  return t.push(std::move(out), any_grad(x), [x, times](Tape& tp, const Matrix& g) {
    Matrix gx(x.rows(), x.cols());
    for (Index r = 0; r < x.rows(); ++r) gx.row(r) = g.middleRows(r * times, times).colwise().sum();
    tp.accumulate(x.id, gx);
  });
}

Var unflatten_rows(Var column, Index rows, Index cols) {
  require_shape(column.cols() == 1 && column.rows() == rows * cols, "unflatten_rows: size mismatch");
  Tape& t = *column.tape;
  Matrix out = Eigen::Map<const Matrix>(column.value().data(), cols, rows).transpose();
  return t.push(std::move(out), any_grad(column), [column, rows, cols](Tape& tp, const Matrix& g) {
    Matrix gc(rows * cols, 1);
    Eigen::Map<Matrix>(gc.data(), cols, rows) = g.transpose();
    tp.accumulate(column.id, gc);
  });
}

Var operator+(Var a, Var b) {
  same_shape(a, b, "add");
  Tape& t = *a.tape;
  return t.push(a.value() + b.value(), any_grad(a, b), [a, b](Tape& tp, const Matrix& g) {
    if (a.requires_grad()) tp.accumulate(a.id, g);
    if (b.requires_grad()) tp.accumulate(b.id, g);
  });
}

Var operator-(Var a, Var b) {
  same_shape(a, b, "sub");
  Tape& t = *a.tape;
  return t.push(a.value() - b.value(), any_grad(a, b), [a, b](Tape& tp, const Matrix& g) {
    if (a.requires_grad()) tp.accumulate(a.id, g);
    if (b.requires_grad()) tp.accumulate_expr(b.id, -g);
  });
}

Var operator*(Var a, Var b) {
  same_shape(a, b, "mul");
  Tape& t = *a.tape;
  Matrix out = a.value().cwiseProduct(b.value());
  return t.push(std::move(out), any_grad(a, b), [a, b](Tape& tp, const Matrix& g) {
    if (a.requires_grad()) tp.accumulate_expr(a.id, g.cwiseProduct(b.value()));
    if (b.requires_grad()) tp.accumulate_expr(b.id, g.cwiseProduct(a.value()));
  });
}

Var operator*(double s, Var a) {
  Tape& t = *a.tape;
  return t.push(s * a.value(), any_grad(a),
                [a, s](Tape& tp, const Matrix& g) { tp.accumulate_expr(a.id, s * g); });
}

Var operator+(Var a, double s) {
  Tape& t = *a.tape;
  Matrix out = a.value().array() + s;
  return t.push(std::move(out), any_grad(a), [a](Tape& tp, const Matrix& g) { tp.accumulate(a.id, g); });
}

Var operator-(Var a) { return -1.0 * a; }

Var minimum(Var a, Var b) {
  same_shape(a, b, "minimum");
  Tape& t = *a.tape;
  Matrix out = a.value().cwiseMin(b.value());
  return t.push(std::move(out), any_grad(a, b), [a, b](Tape& tp, const Matrix& g) {
    // Ties route the gradient to the first argument.
    const auto first = (a.value().array() <= b.value().array());
    if (a.requires_grad()) tp.accumulate_expr(a.id, first.select(g, 0.0));
    if (b.requires_grad()) tp.accumulate_expr(b.id, first.select(0.0, g));
  });
}

Var relu(Var x) {
  Tape& t = *x.tape;
  Matrix out = x.value().cwiseMax(0.0);
  return t.push(std::move(out), any_grad(x), [x](Tape& tp, const Matrix& g) {
    tp.accumulate_expr(x.id, (x.value().array() > 0.0).select(g, 0.0));
  });
}

Var tanh(Var x) {
  Tape& t = *x.tape;
  Matrix out = x.value().array().tanh();
  const std::size_t out_id = t.size();
  return t.push(std::move(out), any_grad(x), [x, out_id](Tape& tp, const Matrix& g) {
    const Matrix& y = tp.value(out_id);
    tp.accumulate_expr(x.id, g.cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var exp(Var x) {
  Tape& t = *x.tape;
  Matrix out = x.value().array().exp();
  const std::size_t out_id = t.size();
  return t.push(std::move(out), any_grad(x), [x, out_id](Tape& tp, const Matrix& g) {
    tp.accumulate_expr(x.id, g.cwiseProduct(tp.value(out_id)));
  });
}

Var softplus(Var x) {
  Tape& t = *x.tape;
  // log(1 + e^x) = max(x, 0) + log1p(e^{-|x|})
  Matrix out = x.value().unaryExpr([](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); });
  return t.push(std::move(out), any_grad(x), [x](Tape& tp, const Matrix& g) {
    const Matrix sig = x.value().unaryExpr([](double v) {
      return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    });
    tp.accumulate_expr(x.id, g.cwiseProduct(sig));
  });
}

Var clamp(Var x, double lo, double hi) {
  Tape& t = *x.tape;
  Matrix out = x.value().cwiseMax(lo).cwiseMin(hi);
  return t.push(std::move(out), any_grad(x), [x, lo, hi](Tape& tp, const Matrix& g) {
    const auto inside = (x.value().array() >= lo) && (x.value().array() <= hi);
    tp.accumulate_expr(x.id, inside.select(g, 0.0));
  });
}

Var sum(Var x) {
  Tape& t = *x.tape;
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return t.push(std::move(out), any_grad(x), [x](Tape& tp, const Matrix& g) {
    tp.accumulate_expr(x.id, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
  });
}

Var mean(Var x) {
  require(x.value().size() > 0, "mean: empty input");
  return (1.0 / static_cast<double>(x.value().size())) * sum(x);
}

Var row_sum(Var x) {
  Tape& t = *x.tape;
  Matrix out = x.value().rowwise().sum();
  return t.push(std::move(out), any_grad(x), [x](Tape& tp, const Matrix& g) {
    tp.accumulate_expr(x.id, g.col(0).replicate(1, x.cols()));
  });
}

Var row_mean(Var x) {
  require(x.cols() > 0, "row_mean: no columns");
  return (1.0 / static_cast<double>(x.cols())) * row_sum(x);
}

Var quantile_huber_loss(Var pred, const Matrix& targets, const Matrix& taus, double kappa) {
  require(kappa > 0.0, "quantile_huber_loss: kappa must be > 0");
  require_shape(taus.rows() == pred.rows() && taus.cols() == pred.cols(),
                "quantile_huber_loss: taus must match pred");
  require_shape(targets.rows() == pred.rows(), "quantile_huber_loss: target rows must match pred");
  const Index rows = pred.rows(), n = pred.cols(), atoms = targets.cols();
  const double scale = 1.0 / (static_cast<double>(rows) * static_cast<double>(atoms));
  const Matrix& p = pred.value();
  Matrix dpred(rows, n);
  double total = 0.0;
  for (Index r = 0; r < rows; ++r) {
    for (Index i = 0; i < n; ++i) {
      const double z = p(r, i);
      const double tau = taus(r, i);
      double acc = 0.0, dacc = 0.0;
      for (Index k = 0; k < atoms; ++k) {
        const double u = targets(r, k) - z;
        acc += quantile_huber(u, tau, kappa);
        dacc -= quantile_huber_derivative(u, tau, kappa);
      }
      total += acc;
      dpred(r, i) = dacc * scale;
    }
  }
  Matrix out(1, 1);
  out(0, 0) = total * scale;
  Tape& t = *pred.tape;
  return t.push(std::move(out), any_grad(pred), [pred, dpred = std::move(dpred)](Tape& tp, const Matrix& g) {
    tp.accumulate_expr(pred.id, g(0, 0) * dpred);
  });
}

}  // namespace qac::nn
