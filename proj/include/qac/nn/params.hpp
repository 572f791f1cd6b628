#pragma once

// Generic helpers over any parameter set that exposes visit_tensors.

#include "qac/nn/mlp.hpp"

#include <cmath>
#include <vector>

namespace qac::nn {

template <typename P>
concept ParameterSet = requires(P& p) { visit_tensors(p, [](auto&) {}); };

/// Per-tensor gradients, in visit order.
using Gradients = std::vector<Matrix>;

template <ParameterSet P>
std::vector<Var> bind(Tape& tape, const P& params, bool requires_grad) {
  std::vector<Var> vars;
  visit_tensors(params, [&](const Matrix& m) { vars.push_back(tape.leaf(m, requires_grad)); });
  return vars;
}

template <ParameterSet P>
Gradients zeros_like(const P& params) {
  Gradients out;
  visit_tensors(params, [&](const Matrix& m) { out.push_back(Matrix::Zero(m.rows(), m.cols())); });
  return out;
}

inline Gradients gradients(const Tape& tape, std::span<const Var> vars) {
  Gradients out;
  out.reserve(vars.size());
  for (Var v : vars) out.push_back(tape.grad(v));
  return out;
}

template <ParameterSet P>
std::size_t parameter_count(const P& params) {
  std::size_t n = 0;
  visit_tensors(params, [&](const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

template <ParameterSet P>
std::vector<Matrix*> tensor_refs(P& params) {
  std::vector<Matrix*> out;
  visit_tensors(params, [&](Matrix& m) { out.push_back(&m); });
  return out;
}

template <ParameterSet P>
std::vector<const Matrix*> tensor_refs(const P& params) {
  std::vector<const Matrix*> out;
  visit_tensors(params, [&](const Matrix& m) { out.push_back(&m); });
  return out;
}

template <ParameterSet P>
bool structurally_equal(const P& a, const P& b) {
  auto ra = tensor_refs(a);
  auto rb = tensor_refs(b);
  if (ra.size() != rb.size()) return false;
  for (std::size_t i = 0; i < ra.size(); ++i)
    if (ra[i]->rows() != rb[i]->rows() || ra[i]->cols() != rb[i]->cols()) return false;
  return true;
}

template <ParameterSet P>
bool all_finite(const P& params) {
  bool ok = true;
  visit_tensors(params, [&](const Matrix& m) { ok = ok && m.allFinite(); });
  return ok;
}

/// Max absolute elementwise difference between two structurally equal sets.
template <ParameterSet P>
double max_abs_difference(const P& a, const P& b) {
  auto ra = tensor_refs(a);
  auto rb = tensor_refs(b);
  require(ra.size() == rb.size(), "max_abs_difference: structure mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) m = std::max(m, (*ra[i] - *rb[i]).cwiseAbs().maxCoeff());
  return m;
}

/// Sets every tensor to zero (used to build rigged networks in tests and tools).
template <ParameterSet P>
void set_zero(P& params) {
  visit_tensors(params, [](Matrix& m) { m.setZero(); });
}

}  // namespace qac::nn
