#include "qac/checks.hpp"

#include "qac/nn/gradcheck.hpp"

namespace qac {

namespace {

// Mean of twin-min quantiles at fixed fractions, so that repeated evaluations
// see the same function.
DifferentiableQ fixed_fraction_critic(const TwinZ& twin, const Matrix& taus) {
  return [&twin, taus](nn::Tape& tape, nn::Var states, nn::Var actions) {
    auto v1 = nn::bind(tape, twin.online1, false);
    auto v2 = nn::bind(tape, twin.online2, false);
    nn::ParamCursor c1(v1), c2(v2);
    return nn::row_mean(nn::minimum(z_forward(twin.online1, c1, states, actions, taus),
                                    z_forward(twin.online2, c2, states, actions, taus)));
  };
}

Matrix random_matrix(Index rows, Index cols, Rng& rng) {
  Matrix out(rows, cols);
  for (Index i = 0; i < out.size(); ++i) out.data()[i] = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
  return out;
}

Index random_width(Rng& rng) { return std::uniform_int_distribution<Index>(4, 32)(rng); }

}  // namespace

GradCheckReport run_grad_checks(int trials, std::uint64_t seed) {
  GradCheckReport report;
  report.trials = trials;
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(trial));
    const Index ds = std::uniform_int_distribution<Index>(1, 3)(rng);
    const Index da = std::uniform_int_distribution<Index>(1, 2)(rng);
    const Index hidden = random_width(rng);
    const Index batch = 4, n = 8, m = 4, k = 3;
    const ZNetConfig zc{ds, da, hidden, 16};
    const TwinZ twin = make_twin_z(zc, rng);
    GaussianPolicyParams policy = make_policy({ds, da, hidden}, rng);
    // Larger heads so the tanh and log-std paths are exercised away from zero.
    policy.mean_head = nn::make_linear(hidden, da, rng, 1.0);
    policy.log_std_head = nn::make_linear(hidden, da, rng, 1.0);
    const Matrix states = random_matrix(batch, ds, rng);
    const Matrix actions = random_matrix(batch, da, rng) * 0.9;

    // Critic quantile loss.
    {
      const Matrix targets = 2.0 * random_matrix(batch, m * k, rng);
      const Matrix taus = sample_fraction_matrix(batch, n, rng);
      nn::Tape tape;
      auto vars = nn::bind(tape, twin.online1, true);
      nn::ParamCursor cursor(vars);
      nn::Var loss = quantile_regression_loss(twin.online1, cursor, tape.constant(states), tape.constant(actions),
                                              targets, taus, kDefaultKappa);
      tape.backward(loss);
      const auto grads = nn::gradients(tape, vars);
      const std::function<double(const ZNetworkParams&)> f = [&](const ZNetworkParams& z) {
        return quantile_regression_loss_value(z, states, actions, targets, taus, kDefaultKappa);
      };
      report.mtv = std::max(report.mtv, nn::finite_diff_check(f, twin.online1, grads));
    }

    // Policy loss.
    {
      const EntropyTemp temp = EntropyTemp::with_alpha(0.2 + uniform01(rng), -static_cast<double>(da));
      const DifferentiableQ critic = fixed_fraction_critic(twin, sample_fraction_matrix(batch, n, rng));
      Rng noise_rng = rng;
      const PolicyLossResult analytic = policy_loss(policy, temp, critic, states, rng);
      const Matrix noise = standard_normal(noise_rng, batch, da);
      const std::function<double(const GaussianPolicyParams&)> f = [&](const GaussianPolicyParams& p) {
        return policy_loss_value(p, temp, critic, states, noise);
      };
      report.policy = std::max(report.policy, nn::finite_diff_check(f, policy, analytic.grads));
    }

    // Temperature loss.
    {
      const EntropyTemp temp = EntropyTemp::with_alpha(0.05 + uniform01(rng), -static_cast<double>(da));
      std::vector<double> logps(batch);
      for (double& lp : logps) lp = 3.0 * standard_normal(rng);
      const std::function<double(const EntropyTemp&)> f = [&](const EntropyTemp& t) { return alpha_loss(t, logps); };
      report.alpha = std::max(report.alpha, nn::finite_diff_check(f, temp, alpha_loss_gradient(temp, logps)));
    }

    // Scalar twin critic loss.
    {
      const TwinQ q = make_twin_q(ds, da, hidden, rng);
      const Matrix targets = random_matrix(batch, 1, rng);
      const TwinLossResult r = twin_mse_loss(q, states, actions, targets);
      const std::function<double(const nn::MlpParams&)> f = [&](const nn::MlpParams& p) {
        return mse_loss_value(p, states, actions, targets);
      };
      report.sac_critic = std::max(report.sac_critic, nn::finite_diff_check(f, q.online1, r.grads1));
    }
  }
  return report;
}

ContractionReport run_contraction_suite(int n_mdps, std::uint64_t seed) {
  ContractionReport report;
  Rng rng = make_rng(seed, 7);
  for (int i = 0; i < n_mdps; ++i) {
    RandomMdpOptions options;
    options.gamma = i % 2 == 0 ? 0.5 : 0.9;
    options.terminal_probability = 0.2;
    const MdpSpec mdp = random_mdp(options, rng);
    const TabularPolicy pi = random_policy(mdp, rng);
    const TabularZ z1 = random_tabular_z(mdp.n_states, mdp.n_actions, 6, 3.0, rng);
    const TabularZ z2 = random_tabular_z(mdp.n_states, mdp.n_actions, 6, 3.0, rng);
    const double before = sup_wasserstein(z1, z2);
    const double after =
        sup_wasserstein(apply_distributional_bellman(mdp, pi, z1), apply_distributional_bellman(mdp, pi, z2));
    report.worst_excess = std::max(report.worst_excess, after - mdp.gamma * before);
    if (before > 0.0 && after / before > report.worst_ratio) {
      report.worst_ratio = after / before;
      report.worst_ratio_gamma = mdp.gamma;
    }
    ++report.mdps;
  }
  return report;
}

MeanConsistencyReport run_mean_consistency(int n_mdps, std::uint64_t seed, double tol) {
  MeanConsistencyReport report;
  Rng rng = make_rng(seed, 11);
  for (int i = 0; i < n_mdps; ++i) {
    RandomMdpOptions options;
    options.gamma = i % 2 == 0 ? 0.5 : 0.9;
    options.terminal_probability = 0.2;
    const MdpSpec mdp = random_mdp(options, rng);
    const TabularPolicy pi = random_policy(mdp, rng);
    const FixedPointResult fp = fixed_point(mdp, pi, tol);
    const Matrix q = policy_evaluation(mdp, pi);
    for (Index s = 0; s < mdp.n_states; ++s)
      for (Index a = 0; a < mdp.n_actions; ++a)
        report.max_error = std::max(report.max_error, std::abs(fp.z.at(s, a).mean() - q(s, a)));
    ++report.mdps;
  }
  return report;
}

MdpSpec single_state_mdp(double gamma) {
  MdpSpec mdp;
  mdp.n_states = 1;
  mdp.n_actions = 1;
  mdp.gamma = gamma;
  mdp.transitions = {{{1.0}}};
  mdp.rewards = {{EmpiricalDistribution::dirac(1.0)}};
  mdp.terminal = {false};
  return mdp;
}

}  // namespace qac
