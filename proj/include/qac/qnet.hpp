#pragma once

// Scalar twin Q-critic used by the SAC baseline.

#include "qac/znet.hpp"

namespace qac {

using TwinQ = Twin<nn::MlpParams>;

inline TwinQ make_twin_q(Index state_dim, Index action_dim, Index hidden, Rng& rng) {
  TwinQ twin;
  twin.online1 = nn::make_mlp({state_dim + action_dim, hidden, hidden, 1}, rng);
  twin.online2 = nn::make_mlp({state_dim + action_dim, hidden, hidden, 1}, rng);
  twin.target1 = twin.online1;
  twin.target2 = twin.online2;
  return twin;
}

/// states R x ds, actions R x da -> R x 1.
inline nn::Var q_forward(const nn::MlpParams& q, nn::ParamCursor& params, nn::Var states, nn::Var actions) {
  return nn::mlp_forward(q, params, nn::concat_cols(states, actions));
}

inline Matrix q_values(const nn::MlpParams& q, const Matrix& states, const Matrix& actions) {
  Matrix sa(states.rows(), states.cols() + actions.cols());
  sa << states, actions;
  return nn::mlp_forward(q, sa);
}

}  // namespace qac
