#pragma once

// Squashed-Gaussian policy: a = tanh(mu(s) + sigma(s) * xi), xi ~ N(0, I).
// Log-densities include the tanh change-of-variables term.

#include "qac/nn/adam.hpp"
#include "qac/qnet.hpp"
#include "qac/znet.hpp"

#include <span>

namespace qac {

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;
/// Executed actions are kept this far inside the open box (-1, 1).
inline constexpr double kActionBound = 1.0 - 1e-9;

struct PolicyConfig {
  Index state_dim = 1;
  Index action_dim = 1;
  Index hidden = 64;
};

struct GaussianPolicyParams {
  nn::MlpParams trunk;  // state -> hidden, rectified output
  nn::Linear mean_head;
  nn::Linear log_std_head;
  double log_std_min = kLogStdMin;
  double log_std_max = kLogStdMax;

  Index state_dim() const { return trunk.in_dim(); }
  Index action_dim() const { return mean_head.out_dim(); }
};

template <typename G>
  requires std::same_as<std::remove_const_t<G>, GaussianPolicyParams>
void visit_tensors(G& p, auto&& f) {
  visit_tensors(p.trunk, f);
  visit_tensors(p.mean_head, f);
  visit_tensors(p.log_std_head, f);
}

/// Heads start near zero, so an untrained policy acts around a = 0 with sigma near 1.
GaussianPolicyParams make_policy(const PolicyConfig& cfg, Rng& rng);

/// Entropy temperature, optimised in log space so alpha stays positive.
struct EntropyTemp {
  Matrix log_alpha = Matrix::Zero(1, 1);
  double target_entropy = -1.0;

  double alpha() const { return std::exp(log_alpha(0, 0)); }
  static EntropyTemp with_alpha(double alpha, double target_entropy);
};

template <typename E>
  requires std::same_as<std::remove_const_t<E>, EntropyTemp>
void visit_tensors(E& t, auto&& f) {
  f(t.log_alpha);
}

struct PolicyOutput {
  nn::Var actions;    // R x da, inside [-1, 1]
  nn::Var log_probs;  // R x 1
};

/// Differentiable reparameterised sample with the supplied standard-normal noise (R x da).
PolicyOutput policy_forward(const GaussianPolicyParams& policy, nn::ParamCursor& params, nn::Var states,
                            const Matrix& noise);

struct ActionBatch {
  Matrix actions;    // R x da, strictly inside (-1, 1)
  Vector log_probs;  // R
};

ActionBatch sample_actions_with_noise(const GaussianPolicyParams& policy, const Matrix& states, const Matrix& noise);
/// Draws R x da standard normals from `rng`, row by row.
ActionBatch sample_actions(const GaussianPolicyParams& policy, const Matrix& states, Rng& rng);

struct ActionSample {
  Vector action;
  double log_prob = 0.0;
};

ActionSample sample_action(const GaussianPolicyParams& policy, const Vector& s, Rng& rng);

/// tanh(mu(s)).
Vector deterministic_action(const GaussianPolicyParams& policy, const Vector& s);
Matrix deterministic_actions(const GaussianPolicyParams& policy, const Matrix& states);

/// Differentiable Q(s, a) -> R x 1 used by the policy loss. The critic's own
/// parameters are bound without gradients.
using DifferentiableQ = std::function<nn::Var(nn::Tape&, nn::Var states, nn::Var actions)>;

/// Q = mean over n_taus fresh fractions of the twin-min quantile values.
/// Fractions are drawn from `rng` when the returned function runs.
DifferentiableQ mean_of_z(const TwinZ& twin, Index n_taus, Rng& rng);
/// Q = min of the two online scalar critics.
DifferentiableQ min_of_q(const TwinQ& twin);

struct PolicyLossResult {
  double loss = 0.0;
  nn::Gradients grads;  // with respect to the policy parameters only
  Vector log_probs;     // detached, for the temperature update
};

/// mean over the batch of alpha * log pi(a|s) - Q(s, a), a reparameterised.
/// Noise is drawn before the critic consumes any fractions.
PolicyLossResult policy_loss(const GaussianPolicyParams& policy, const EntropyTemp& temp,
                             const DifferentiableQ& critic, const Matrix& states, Rng& rng);

/// Same loss with fixed noise; returns only the value. Used by finite-difference checks.
double policy_loss_value(const GaussianPolicyParams& policy, const EntropyTemp& temp, const DifferentiableQ& critic,
                         const Matrix& states, const Matrix& noise);

/// mean over the batch of -log_alpha * (log pi + target_entropy).
double alpha_loss(const EntropyTemp& temp, std::span<const double> log_probs);
/// Gradient of alpha_loss with respect to log_alpha (one 1x1 tensor).
nn::Gradients alpha_loss_gradient(const EntropyTemp& temp, std::span<const double> log_probs);
void alpha_step(EntropyTemp& temp, const nn::Gradients& grad, nn::AdamState& optimizer);

}  // namespace qac
