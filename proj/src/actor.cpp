#include "qac/actor.hpp"

#include <numbers>

namespace qac {

GaussianPolicyParams make_policy(const PolicyConfig& cfg, Rng& rng) {
  require(cfg.state_dim >= 1 && cfg.action_dim >= 1 && cfg.hidden >= 1, "make_policy: dimensions must be >= 1");
  GaussianPolicyParams p;
  p.trunk = nn::make_mlp({cfg.state_dim, cfg.hidden, cfg.hidden}, rng, 1.0, true);
  p.mean_head = nn::make_linear(cfg.hidden, cfg.action_dim, rng, 1e-2);
  p.log_std_head = nn::make_linear(cfg.hidden, cfg.action_dim, rng, 1e-2);
  return p;
}

EntropyTemp EntropyTemp::with_alpha(double alpha, double target_entropy) {
  require(alpha > 0.0, "EntropyTemp: alpha must be > 0");
  EntropyTemp t;
  t.log_alpha(0, 0) = std::log(alpha);
  t.target_entropy = target_entropy;
  return t;
}

PolicyOutput policy_forward(const GaussianPolicyParams& policy, nn::ParamCursor& params, nn::Var states,
                            const Matrix& noise) {
  require_shape(states.cols() == policy.state_dim(), "policy: state dimension mismatch");
  require_shape(noise.rows() == states.rows() && noise.cols() == policy.action_dim(),
                "policy: noise must be batch x action_dim");
  nn::Tape& tape = *states.tape;
  nn::Var h = nn::mlp_forward(policy.trunk, params, states);
  nn::Var mu = nn::linear_forward(policy.mean_head, params, h);
  nn::Var log_std = nn::clamp(nn::linear_forward(policy.log_std_head, params, h), policy.log_std_min,
                              policy.log_std_max);
  nn::Var pre = mu + nn::exp(log_std) * tape.constant(noise);
  nn::Var actions = nn::tanh(pre);
  // Gaussian log-density of xi minus log|d tanh / d pre|, using
  // log(1 - tanh(x)^2) = 2 (log 2 - x - softplus(-2x)).
  const double half_log_two_pi = 0.5 * std::log(2.0 * std::numbers::pi);
  Matrix constant = (-0.5 * noise.array().square() - half_log_two_pi - 2.0 * std::numbers::ln2).matrix();
  nn::Var per_dim = tape.constant(std::move(constant)) - log_std + 2.0 * pre + 2.0 * nn::softplus(-2.0 * pre);
  return {actions, nn::row_sum(per_dim)};
}

ActionBatch sample_actions_with_noise(const GaussianPolicyParams& policy, const Matrix& states, const Matrix& noise) {
  nn::Tape tape;
  auto vars = nn::bind(tape, policy, false);
  nn::ParamCursor cursor(vars);
  PolicyOutput out = policy_forward(policy, cursor, tape.constant(states), noise);
  ActionBatch batch;
  batch.actions = out.actions.value().cwiseMax(-kActionBound).cwiseMin(kActionBound);
  batch.log_probs = out.log_probs.value().col(0);
  return batch;
}

ActionBatch sample_actions(const GaussianPolicyParams& policy, const Matrix& states, Rng& rng) {
  return sample_actions_with_noise(policy, states, standard_normal(rng, states.rows(), policy.action_dim()));
}

ActionSample sample_action(const GaussianPolicyParams& policy, const Vector& s, Rng& rng) {
  ActionBatch b = sample_actions(policy, s.transpose(), rng);
  return {b.actions.row(0).transpose(), b.log_probs(0)};
}

Matrix deterministic_actions(const GaussianPolicyParams& policy, const Matrix& states) {
  require_shape(states.cols() == policy.state_dim(), "policy: state dimension mismatch");
  const Matrix h = nn::mlp_forward(policy.trunk, states);
  const Matrix mu = (h * policy.mean_head.weight).rowwise() + policy.mean_head.bias.row(0);
  return mu.array().tanh().matrix().cwiseMax(-kActionBound).cwiseMin(kActionBound);
}

Vector deterministic_action(const GaussianPolicyParams& policy, const Vector& s) {
  return deterministic_actions(policy, s.transpose()).row(0).transpose();
}

DifferentiableQ mean_of_z(const TwinZ& twin, Index n_taus, Rng& rng) {
  require(n_taus >= 1, "mean_of_z: n_taus must be >= 1");
  return [&twin, n_taus, &rng](nn::Tape& tape, nn::Var states, nn::Var actions) {
    const Matrix taus = sample_fraction_matrix(states.rows(), n_taus, rng);
    auto v1 = nn::bind(tape, twin.online1, false);
    auto v2 = nn::bind(tape, twin.online2, false);
    nn::ParamCursor c1(v1), c2(v2);
    nn::Var z1 = z_forward(twin.online1, c1, states, actions, taus);
    nn::Var z2 = z_forward(twin.online2, c2, states, actions, taus);
    return nn::row_mean(nn::minimum(z1, z2));
  };
}

DifferentiableQ min_of_q(const TwinQ& twin) {
  return [&twin](nn::Tape& tape, nn::Var states, nn::Var actions) {
    auto v1 = nn::bind(tape, twin.online1, false);
    auto v2 = nn::bind(tape, twin.online2, false);
    nn::ParamCursor c1(v1), c2(v2);
    return nn::minimum(q_forward(twin.online1, c1, states, actions), q_forward(twin.online2, c2, states, actions));
  };
}

namespace {

struct LossGraph {
  nn::Var loss;
  PolicyOutput sample;
};

LossGraph build_policy_loss(nn::Tape& tape, const GaussianPolicyParams& policy, std::span<const nn::Var> vars,
                            const EntropyTemp& temp, const DifferentiableQ& critic, const Matrix& states,
                            const Matrix& noise) {
  require(states.rows() >= 1, "policy_loss: empty batch");
  nn::ParamCursor cursor(vars);
  nn::Var s = tape.constant(states);
  PolicyOutput out = policy_forward(policy, cursor, s, noise);
  nn::Var q = critic(tape, s, out.actions);
  require_shape(q.rows() == states.rows() && q.cols() == 1, "policy_loss: critic must return batch x 1");
  nn::Var loss = nn::mean(temp.alpha() * out.log_probs - q);
  return {loss, out};
}

}  // namespace

PolicyLossResult policy_loss(const GaussianPolicyParams& policy, const EntropyTemp& temp,
                             const DifferentiableQ& critic, const Matrix& states, Rng& rng) {
  const Matrix noise = standard_normal(rng, states.rows(), policy.action_dim());
  nn::Tape tape;
  auto vars = nn::bind(tape, policy, true);
  LossGraph g = build_policy_loss(tape, policy, vars, temp, critic, states, noise);
  tape.backward(g.loss);
  PolicyLossResult r;
  r.loss = g.loss.value()(0, 0);
  r.grads = nn::gradients(tape, vars);
  r.log_probs = g.sample.log_probs.value().col(0);
  return r;
}

double policy_loss_value(const GaussianPolicyParams& policy, const EntropyTemp& temp, const DifferentiableQ& critic,
                         const Matrix& states, const Matrix& noise) {
  nn::Tape tape;
  auto vars = nn::bind(tape, policy, false);
  return build_policy_loss(tape, policy, vars, temp, critic, states, noise).loss.value()(0, 0);
}

double alpha_loss(const EntropyTemp& temp, std::span<const double> log_probs) {
  require(!log_probs.empty(), "alpha_loss: empty batch");
  double total = 0.0;
  for (double lp : log_probs) total += -temp.log_alpha(0, 0) * (lp + temp.target_entropy);
  return total / static_cast<double>(log_probs.size());
}

nn::Gradients alpha_loss_gradient(const EntropyTemp& temp, std::span<const double> log_probs) {
  require(!log_probs.empty(), "alpha_loss: empty batch");
  nn::Tape tape;
  nn::Var log_alpha = tape.leaf(temp.log_alpha, true);
  Matrix shifted(static_cast<Index>(log_probs.size()), 1);
  for (std::size_t i = 0; i < log_probs.size(); ++i) shifted(static_cast<Index>(i), 0) = log_probs[i] + temp.target_entropy;
  nn::Var weighted = nn::matmul(tape.constant(shifted), log_alpha);
  nn::Var loss = nn::mean(-weighted);
  tape.backward(loss);
  return {tape.grad(log_alpha)};
}

void alpha_step(EntropyTemp& temp, const nn::Gradients& grad, nn::AdamState& optimizer) {
  nn::adam_step(optimizer, temp, grad);
}

}  // namespace qac
