#pragma once

#include "qac/nn/params.hpp"

#include <cmath>
#include <stdexcept>

namespace qac::nn {

/// Raised when an optimizer step is handed non-finite gradients.
class PoisonedUpdateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::int64_t step = 0;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <ParameterSet P>
AdamState make_adam(const P& params, double learning_rate) {
  require(learning_rate > 0.0, "make_adam: learning rate must be > 0");
  AdamState s;
  s.learning_rate = learning_rate;
  s.first_moment = zeros_like(params);
  s.second_moment = zeros_like(params);
  return s;
}

/// One bias-corrected Adam update. Parameters and state are left untouched
/// when a gradient is non-finite.
template <ParameterSet P>
void adam_step(AdamState& state, P& params, const Gradients& grads) {
  auto refs = tensor_refs(params);
  require(refs.size() == grads.size() && refs.size() == state.first_moment.size(),
          "adam_step: gradient list does not match parameters");
  for (std::size_t i = 0; i < refs.size(); ++i) {
    require_shape(grads[i].rows() == refs[i]->rows() && grads[i].cols() == refs[i]->cols(),
                  "adam_step: gradient shape mismatch at tensor " + std::to_string(i));
    if (!grads[i].allFinite())
      throw PoisonedUpdateError("adam_step: non-finite gradient in tensor " + std::to_string(i));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * grads[i];
    v = state.beta2 * v + (1.0 - state.beta2) * grads[i].cwiseAbs2();
    refs[i]->array() -= state.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);
  }
}

}  // namespace qac::nn
