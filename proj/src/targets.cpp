#include "qac/targets.hpp"

namespace qac {

void CriticHyper::validate() const {
  require(gamma >= 0.0 && gamma < 1.0, "CriticHyper: gamma must lie in [0, 1)");
  require(n >= 1 && m >= 1 && k >= 1, "CriticHyper: N, M and K must be >= 1");
  require(kappa > 0.0, "CriticHyper: kappa must be > 0");
}

namespace {

thread_local std::uint64_t g_mtv_calls = 0;

void check_batch(const Vector& rewards, const Vector& dones, const Matrix& next_states) {
  require_shape(rewards.size() == next_states.rows() && dones.size() == next_states.rows(),
                "targets: rewards, dones and next states must share the batch size");
}

// Per transition: `actions` noise rows, then `actions` x `fractions` taus.
struct TargetDraws {
  Matrix noise;  // (B*K) x da, row b*K + k
  Matrix taus;   // (B*K) x M,  row b*K + k
};

TargetDraws draw_target_randomness(Index batch, Index actions, Index fractions, Index action_dim, Rng& rng) {
  TargetDraws d{Matrix(batch * actions, action_dim), Matrix(batch * actions, fractions)};
  for (Index b = 0; b < batch; ++b) {
    d.noise.middleRows(b * actions, actions) = standard_normal(rng, actions, action_dim);
    d.taus.middleRows(b * actions, actions) = sample_fraction_matrix(actions, fractions, rng);
  }
  return d;
}

Matrix repeat_each_row(const Matrix& x, Index times) {
  Matrix out(x.rows() * times, x.cols());
  for (Index r = 0; r < x.rows(); ++r) out.middleRows(r * times, times).rowwise() = x.row(r);
  return out;
}

// Shared core of the single-sample and multi-sample targets.
Matrix pooled_targets(const Vector& rewards, const Vector& dones, const Matrix& next_states,
                      const GaussianPolicyParams& policy, const QuantileCritic& critic, double alpha,
                      const CriticHyper& hyper, Index actions, Rng& rng) {
  hyper.validate();
  check_batch(rewards, dones, next_states);
  const Index batch = next_states.rows(), m = hyper.m;
  TargetDraws draws = draw_target_randomness(batch, actions, m, policy.action_dim(), rng);
  const Matrix states = actions == 1 ? next_states : repeat_each_row(next_states, actions);
  ActionBatch next = sample_actions_with_noise(policy, states, draws.noise);
  const Matrix z = critic(states, next.actions, draws.taus);
  require_shape(z.rows() == batch * actions && z.cols() == m, "targets: critic returned the wrong shape");
  Matrix out(batch, m * actions);
  for (Index b = 0; b < batch; ++b) {
    const double bootstrap = dones(b) != 0.0 ? 0.0 : hyper.gamma;
    for (Index k = 0; k < actions; ++k) {
      const Index row = b * actions + k;
      const double entropy = alpha * next.log_probs(row);
      for (Index j = 0; j < m; ++j) out(b, k * m + j) = rewards(b) + bootstrap * (z(row, j) - entropy);
    }
  }
  return out;
}

TargetAtoms to_atoms(const Matrix& row, const Matrix& taus, Index m, Index k) {
  TargetAtoms t{Matrix(m, k), Matrix(m, k)};
  for (Index kk = 0; kk < k; ++kk)
    for (Index j = 0; j < m; ++j) {
      t.atoms(j, kk) = row(0, kk * m + j);
      t.taus(j, kk) = taus(kk, j);
    }
  return t;
}

Vector scalar(double v) { return Vector::Constant(1, v); }

}  // namespace

Matrix classic_target_batch(const Vector& rewards, const Vector& dones, const Matrix& next_states,
                            const GaussianPolicyParams& policy, const TwinQ& twin, double alpha, double gamma,
                            Rng& rng) {
  require(gamma >= 0.0 && gamma < 1.0, "classic_target: gamma must lie in [0, 1)");
  check_batch(rewards, dones, next_states);
  ActionBatch next = sample_actions(policy, next_states, rng);
  const Matrix q = q_values(twin.target1, next_states, next.actions).cwiseMin(q_values(twin.target2, next_states, next.actions));
  Matrix out(next_states.rows(), 1);
  for (Index b = 0; b < next_states.rows(); ++b) {
    const double bootstrap = dones(b) != 0.0 ? 0.0 : gamma;
    out(b, 0) = rewards(b) + bootstrap * (q(b, 0) - alpha * next.log_probs(b));
  }
  return out;
}

double classic_target(double r, bool done, const Vector& next_state, const GaussianPolicyParams& policy,
                      const TwinQ& twin, double alpha, double gamma, Rng& rng) {
  return classic_target_batch(scalar(r), scalar(done ? 1.0 : 0.0), next_state.transpose(), policy, twin, alpha, gamma,
                              rng)(0, 0);
}

Matrix single_sample_target_batch(const Vector& rewards, const Vector& dones, const Matrix& next_states,
                                  const GaussianPolicyParams& policy, const QuantileCritic& target_critic,
                                  double alpha, const CriticHyper& hyper, Rng& rng) {
  hyper.validate();
  check_batch(rewards, dones, next_states);
  const Index batch = next_states.rows(), m = hyper.m;
  Matrix noise(batch, policy.action_dim());
  Matrix taus(batch, m);
  for (Index b = 0; b < batch; ++b) {
    noise.row(b) = standard_normal(rng, 1, policy.action_dim());
    taus.row(b) = sample_fraction_matrix(1, m, rng);
  }
  ActionBatch next = sample_actions_with_noise(policy, next_states, noise);
  const Matrix z = target_critic(next_states, next.actions, taus);
  require_shape(z.rows() == batch && z.cols() == m, "targets: critic returned the wrong shape");
  Matrix out(batch, m);
  for (Index b = 0; b < batch; ++b) {
    const double bootstrap = dones(b) != 0.0 ? 0.0 : hyper.gamma;
    const double entropy = alpha * next.log_probs(b);
    for (Index j = 0; j < m; ++j) out(b, j) = rewards(b) + bootstrap * (z(b, j) - entropy);
  }
  return out;
}

Matrix mtv_target_batch(const Vector& rewards, const Vector& dones, const Matrix& next_states,
                        const GaussianPolicyParams& policy, const QuantileCritic& target_critic, double alpha,
                        const CriticHyper& hyper, Rng& rng) {
  ++g_mtv_calls;
  return pooled_targets(rewards, dones, next_states, policy, target_critic, alpha, hyper, hyper.k, rng);
}

TargetAtoms single_sample_target(double r, bool done, const Vector& next_state, const GaussianPolicyParams& policy,
                                 const QuantileCritic& target_critic, double alpha, const CriticHyper& hyper,
                                 Rng& rng) {
  hyper.validate();
  const Vector noise = standard_normal(rng, 1, policy.action_dim()).row(0).transpose();
  const QuantileFractions fractions = sample_fractions(static_cast<std::size_t>(hyper.m), rng);
  ActionBatch next = sample_actions_with_noise(policy, next_state.transpose(), noise.transpose());
  const Matrix taus = Eigen::Map<const RowVector>(fractions.taus.data(), hyper.m);
  const Matrix z = target_critic(next_state.transpose(), next.actions, taus);
  const double bootstrap = done ? 0.0 : hyper.gamma;
  TargetAtoms t{Matrix(hyper.m, 1), taus.transpose()};
  for (Index j = 0; j < hyper.m; ++j) t.atoms(j, 0) = r + bootstrap * (z(0, j) - alpha * next.log_probs(0));
  return t;
}

TargetAtoms mtv_targets(double r, bool done, const Vector& next_state, const GaussianPolicyParams& policy,
                        const QuantileCritic& target_critic, double alpha, const CriticHyper& hyper, Rng& rng) {
  hyper.validate();
  ++g_mtv_calls;
  Rng replay = rng;
  const Matrix row = pooled_targets(scalar(r), scalar(done ? 1.0 : 0.0), next_state.transpose(), policy, target_critic,
                                    alpha, hyper, hyper.k, rng);
  // Re-derive the fractions from the same stream position for reporting.
  TargetDraws draws = draw_target_randomness(1, hyper.k, hyper.m, policy.action_dim(), replay);
  return to_atoms(row, draws.taus, hyper.m, hyper.k);
}

nn::Var quantile_regression_loss(const ZNetworkParams& z, nn::ParamCursor& params, nn::Var states,
                                 nn::Var actions, const Matrix& targets, const Matrix& taus, double kappa) {
  nn::Var pred = z_forward(z, params, states, actions, taus);
  return nn::quantile_huber_loss(pred, targets, taus, kappa);
}

double quantile_regression_loss_value(const ZNetworkParams& z, const Matrix& states, const Matrix& actions,
                                      const Matrix& targets, const Matrix& taus, double kappa) {
  nn::Tape tape;
  auto vars = nn::bind(tape, z, false);
  nn::ParamCursor cursor(vars);
  return quantile_regression_loss(z, cursor, tape.constant(states), tape.constant(actions), targets, taus, kappa)
      .value()(0, 0);
}

TwinLossResult twin_quantile_loss(const TwinZ& twin, const Matrix& states, const Matrix& actions,
                                  const Matrix& targets, const CriticHyper& hyper, Rng& rng) {
  hyper.validate();
  require_shape(targets.rows() == states.rows(), "twin_quantile_loss: one target row per transition");
  const Matrix taus = sample_fraction_matrix(states.rows(), hyper.n, rng);
  TwinLossResult result;
  auto one = [&](const ZNetworkParams& z, nn::Gradients& grads) {
    nn::Tape tape;
    auto vars = nn::bind(tape, z, true);
    nn::ParamCursor cursor(vars);
    nn::Var loss =
        quantile_regression_loss(z, cursor, tape.constant(states), tape.constant(actions), targets, taus, hyper.kappa);
    tape.backward(loss);
    grads = nn::gradients(tape, vars);
    return loss.value()(0, 0);
  };
  result.loss = one(twin.online1, result.grads1);
  result.loss += one(twin.online2, result.grads2);
  return result;
}

double mtv_loss(const TwinZ& twin, const Vector& s, const Vector& a, const TargetAtoms& targets,
                const CriticHyper& hyper, Rng& rng) {
  hyper.validate();
  const Matrix taus = sample_fraction_matrix(1, hyper.n, rng);
  const std::vector<double> flat = targets.flat();
  const Matrix row = Eigen::Map<const RowVector>(flat.data(), static_cast<Index>(flat.size()));
  return quantile_regression_loss_value(twin.online1, s.transpose(), a.transpose(), row, taus, hyper.kappa) +
         quantile_regression_loss_value(twin.online2, s.transpose(), a.transpose(), row, taus, hyper.kappa);
}

std::uint64_t mtv_target_count() { return g_mtv_calls; }

double mse_loss_value(const nn::MlpParams& q, const Matrix& states, const Matrix& actions, const Matrix& targets) {
  const Matrix diff = q_values(q, states, actions) - targets;
  return diff.squaredNorm() / static_cast<double>(diff.rows());
}

TwinLossResult twin_mse_loss(const TwinQ& twin, const Matrix& states, const Matrix& actions, const Matrix& targets) {
  require_shape(targets.rows() == states.rows() && targets.cols() == 1, "twin_mse_loss: targets must be batch x 1");
  TwinLossResult result;
  auto one = [&](const nn::MlpParams& q, nn::Gradients& grads) {
    nn::Tape tape;
    auto vars = nn::bind(tape, q, true);
    nn::ParamCursor cursor(vars);
    nn::Var diff = q_forward(q, cursor, tape.constant(states), tape.constant(actions)) - tape.constant(targets);
    nn::Var loss = nn::mean(diff * diff);
    tape.backward(loss);
    grads = nn::gradients(tape, vars);
    return loss.value()(0, 0);
  };
  result.loss = one(twin.online1, result.grads1);
  result.loss += one(twin.online2, result.grads2);
  return result;
}

}  // namespace qac
