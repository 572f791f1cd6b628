#pragma once

// Bellman targets and the critic losses built from them.
//
// Random draws per transition happen in a fixed order: first one
// standard-normal action noise row per sampled next action (K rows), then the
// M target fractions for each of those actions. Done transitions consume the
// same draws, so batches stay aligned across variants.

#include "qac/actor.hpp"

namespace qac {

struct CriticHyper {
  double gamma = 0.99;
  Index n = 64;  // online fractions
  Index m = 64;  // target fractions per next action
  Index k = 1;   // next actions
  double kappa = kDefaultKappa;

  void validate() const;
};

/// atoms(j, k) = r + gamma * (Zbar(s', a'_k; taus(j, k)) - alpha * log pi(a'_k | s')).
struct TargetAtoms {
  Matrix atoms;  // M x K
  Matrix taus;   // M x K

  /// Atom k*M + j, the column-major flattening.
  std::vector<double> flat() const { return {atoms.data(), atoms.data() + atoms.size()}; }
};

/// r + gamma * (min target Q(s', a') - alpha log pi(a'|s')), one a' ~ pi.
double classic_target(double r, bool done, const Vector& next_state, const GaussianPolicyParams& policy,
                      const TwinQ& twin, double alpha, double gamma, Rng& rng);

/// M atoms sharing one sampled next action (the single-sample estimate).
TargetAtoms single_sample_target(double r, bool done, const Vector& next_state, const GaussianPolicyParams& policy,
                                 const QuantileCritic& target_critic, double alpha, const CriticHyper& hyper, Rng& rng);

/// M x K atoms pooled over K sampled next actions.
TargetAtoms mtv_targets(double r, bool done, const Vector& next_state, const GaussianPolicyParams& policy,
                        const QuantileCritic& target_critic, double alpha, const CriticHyper& hyper, Rng& rng);

/// Number of multi-sample target constructions on this thread. Instrumentation only.
std::uint64_t mtv_target_count();

// Batched forms: one row per transition. rewards and dones have B entries,
// next_states is B x ds. Draw order matches calling the per-transition form
// on each row in turn.

Matrix classic_target_batch(const Vector& rewards, const Vector& dones, const Matrix& next_states,
                            const GaussianPolicyParams& policy, const TwinQ& twin, double alpha, double gamma,
                            Rng& rng);

/// B x M.
Matrix single_sample_target_batch(const Vector& rewards, const Vector& dones, const Matrix& next_states,
                                  const GaussianPolicyParams& policy, const QuantileCritic& target_critic,
                                  double alpha, const CriticHyper& hyper, Rng& rng);

/// B x (M*K); column k*M + j.
Matrix mtv_target_batch(const Vector& rewards, const Vector& dones, const Matrix& next_states,
                        const GaussianPolicyParams& policy, const QuantileCritic& target_critic, double alpha,
                        const CriticHyper& hyper, Rng& rng);

/// Differentiable multi-sample quantile regression loss for one critic:
///   (1/B) sum_b (1/T) sum_i sum_t rho_{taus(b,i)}(targets(b,t) - Z(s_b, a_b; taus(b,i))).
nn::Var quantile_regression_loss(const ZNetworkParams& z, nn::ParamCursor& params, nn::Var states,
                                 nn::Var actions, const Matrix& targets, const Matrix& taus, double kappa);

double quantile_regression_loss_value(const ZNetworkParams& z, const Matrix& states, const Matrix& actions,
                                      const Matrix& targets, const Matrix& taus, double kappa);

struct TwinLossResult {
  double loss = 0.0;  // sum over both online critics
  nn::Gradients grads1;
  nn::Gradients grads2;
};

/// Draws B x N online fractions (shared by both critics) and returns the
/// summed loss with per-critic gradients. Targets are constants.
TwinLossResult twin_quantile_loss(const TwinZ& twin, const Matrix& states, const Matrix& actions,
                                  const Matrix& targets, const CriticHyper& hyper, Rng& rng);

/// Single-transition form of the twin quantile loss (value only).
double mtv_loss(const TwinZ& twin, const Vector& s, const Vector& a, const TargetAtoms& targets,
                const CriticHyper& hyper, Rng& rng);

/// mean over the batch of (Q(s, a) - y)^2 for each critic, summed.
TwinLossResult twin_mse_loss(const TwinQ& twin, const Matrix& states, const Matrix& actions, const Matrix& targets);

double mse_loss_value(const nn::MlpParams& q, const Matrix& states, const Matrix& actions, const Matrix& targets);

}  // namespace qac
