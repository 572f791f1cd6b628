#pragma once

#include "qac/nn/params.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace qac::nn {

/// Max over every parameter entry of
///   |analytic - central difference| / max(1, |central difference|).
/// `loss` must be a pure function of the parameters.
template <ParameterSet P>
double finite_diff_check(const std::function<double(const P&)>& loss, const P& params,
                         const Gradients& analytic, double eps = 1e-6) {
  require(eps > 0.0, "finite_diff_check: eps must be > 0");
  P probe = params;
  auto refs = tensor_refs(probe);
  require(refs.size() == analytic.size(), "finite_diff_check: gradient list does not match parameters");
  double worst = 0.0;
  for (std::size_t t = 0; t < refs.size(); ++t) {
    Matrix& m = *refs[t];
    for (Index k = 0; k < m.size(); ++k) {
      const double saved = m.data()[k];
      m.data()[k] = saved + eps;
      const double up = loss(probe);
      m.data()[k] = saved - eps;
      const double down = loss(probe);
      m.data()[k] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = std::abs(analytic[t].data()[k] - numeric) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace qac::nn
