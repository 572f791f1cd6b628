#include "qac/checks.hpp"
#include "qac/dporacle.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace qac;

namespace {

// Two states, two actions; action 1 has a two-atom reward.
MdpSpec small_mdp(double gamma) {
  MdpSpec m;
  m.n_states = 2;
  m.n_actions = 2;
  m.gamma = gamma;
  m.transitions = {{{0.7, 0.3}, {0.2, 0.8}}, {{0.5, 0.5}, {1.0, 0.0}}};
  m.rewards = {{EmpiricalDistribution::dirac(0.2), EmpiricalDistribution({0.0, 1.0}, {0.4, 0.6})},
               {EmpiricalDistribution::dirac(-0.5), EmpiricalDistribution({-1.0, 0.5}, {0.5, 0.5})}};
  m.terminal = {false, false};
  return m;
}

// Every path of length `depth`, accumulating (value, probability) leaves.
void enumerate(const MdpSpec& m, const TabularPolicy& pi, Index s, Index a, int depth, double discount, double g,
               double p, std::vector<std::pair<double, double>>& leaves) {
  const auto& r = m.rewards[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double gi = g + discount * r.atoms[i];
    const double pi_ = p * r.weights[i];
    if (depth == 1) {
      leaves.emplace_back(gi, pi_);
      continue;
    }
    for (Index s2 = 0; s2 < m.n_states; ++s2)
      for (Index a2 = 0; a2 < m.n_actions; ++a2) {
        const double q = m.transitions[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)][static_cast<std::size_t>(s2)] *
                         pi(s2, a2);
        if (q > 0.0) enumerate(m, pi, s2, a2, depth - 1, discount * m.gamma, gi, pi_ * q, leaves);
      }
  }
}

// Q^pi by plain iteration of the scalar Bellman equation.
Matrix iterate_q(const MdpSpec& m, const TabularPolicy& pi, int sweeps) {
  Matrix q = Matrix::Zero(m.n_states, m.n_actions);
  for (int k = 0; k < sweeps; ++k) {
    Matrix next(m.n_states, m.n_actions);
    for (Index s = 0; s < m.n_states; ++s)
      for (Index a = 0; a < m.n_actions; ++a) {
        double v = m.rewards[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)].mean();
        if (!m.terminal[static_cast<std::size_t>(s)])
          for (Index s2 = 0; s2 < m.n_states; ++s2)
            v += m.gamma * m.transitions[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)][static_cast<std::size_t>(s2)] *
                 pi.row(s2).dot(q.row(s2));
        next(s, a) = v;
      }
    q = next;
  }
  return q;
}

}  // namespace

TEST_SUITE("dporacle") {

TEST_CASE("single state self-loop with reward 1 converges to 2") {
  const MdpSpec m = single_state_mdp(0.5);
  const FixedPointResult fp = fixed_point(m, uniform_policy(m), 1e-10);
  CHECK(fp.z.at(0, 0).mean() == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(wasserstein1(fp.z.at(0, 0), EmpiricalDistribution::dirac(2.0)) < 1e-9);
  const MdpSpec loaded = load_mdp(testing::source_dir() / "data" / "single_state_mdp.json");
  CHECK(mdp_to_json(loaded) == mdp_to_json(m));
}

TEST_CASE("terminal states pay their reward and stop") {
  MdpSpec m;
  m.n_states = 2;
  m.n_actions = 1;
  m.gamma = 0.8;
  m.transitions = {{{0.0, 1.0}}, {{0.0, 1.0}}};
  m.rewards = {{EmpiricalDistribution::dirac(1.0)}, {EmpiricalDistribution({3.0, 5.0}, {0.5, 0.5})}};
  m.terminal = {false, true};
  const FixedPointResult fp = fixed_point(m, uniform_policy(m), 1e-12);
  CHECK(wasserstein1(fp.z.at(1, 0), EmpiricalDistribution({3.0, 5.0}, {0.5, 0.5})) < 1e-12);
  CHECK(wasserstein1(fp.z.at(0, 0), EmpiricalDistribution({1.0 + 0.8 * 3.0, 1.0 + 0.8 * 5.0}, {0.5, 0.5})) < 1e-12);
  // the payout does not use up a step of the horizon
  CHECK(optimal_finite_horizon_values(m, 1, 1.0)(0) == doctest::Approx(5.0));
  CHECK(optimal_finite_horizon_values(m, 0, 1.0)(1) == doctest::Approx(4.0));
  Rng rng = make_rng(1);
  const EmpiricalDistribution mc = monte_carlo_returns(m, uniform_policy(m), 0, 0, 2000, 1, rng);
  for (double g : mc.atoms) CHECK((g == doctest::Approx(3.4) || g == doctest::Approx(5.0)));
}

TEST_CASE("gamma = 0 gives the reward distribution") {
  const MdpSpec m = small_mdp(0.0);
  const FixedPointResult fp = fixed_point(m, uniform_policy(m), 1e-12);
  for (Index s = 0; s < 2; ++s)
    for (Index a = 0; a < 2; ++a)
      CHECK(wasserstein1(fp.z.at(s, a),
                         project_quantiles(m.rewards[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)], 512)) < 1e-12);
}

TEST_CASE("fixed point matches path enumeration") {
  const double gamma = 0.3;
  const int depth = 7;
  const MdpSpec m = small_mdp(gamma);
  TabularPolicy pi(2, 2);
  pi << 0.25, 0.75, 0.6, 0.4;
  const FixedPointResult fp = fixed_point(m, pi, 1e-12);
  // truncation: the tail is at most gamma^depth max|r| / (1 - gamma); projection onto 512 atoms adds
  // at most range / 512 per application, geometrically damped
  const double tail = std::pow(gamma, depth) * 1.0 / (1 - gamma);
  const double slack = 2.0 / (1 - gamma) / 512.0 / (1 - gamma);
  for (Index s = 0; s < 2; ++s)
    for (Index a = 0; a < 2; ++a) {
      std::vector<std::pair<double, double>> leaves;
      enumerate(m, pi, s, a, depth, 1.0, 0.0, 1.0, leaves);
      std::vector<double> atoms, weights;
      for (auto [g, p] : leaves) {
        atoms.push_back(g);
        weights.push_back(p);
      }
      const EmpiricalDistribution exact(std::move(atoms), std::move(weights));
      CHECK(wasserstein1(fp.z.at(s, a), exact) < tail + slack);
    }
}

TEST_CASE("sup_wasserstein") {
  TabularZ a = TabularZ::filled(2, 1, EmpiricalDistribution::dirac(0.0));
  TabularZ b = a;
  CHECK(sup_wasserstein(a, b) == 0.0);
  b.at(0, 0) = EmpiricalDistribution::dirac(0.5);
  b.at(1, 0) = EmpiricalDistribution({0.0, 4.0}, {0.5, 0.5});
  CHECK(sup_wasserstein(a, b) == doctest::Approx(2.0));
  CHECK(sup_wasserstein(b, a) == doctest::Approx(2.0));
  CHECK_THROWS_AS(sup_wasserstein(a, TabularZ::filled(1, 1, EmpiricalDistribution::dirac(0.0))), ShapeError);
}

TEST_CASE("one application contracts by gamma on random pairs") {
  Rng rng = make_rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    RandomMdpOptions opt;
    opt.gamma = trial % 2 == 0 ? 0.5 : 0.9;
    const MdpSpec m = random_mdp(opt, rng);
    const TabularPolicy pi = random_policy(m, rng);
    const TabularZ z1 = random_tabular_z(m.n_states, m.n_actions, 6, 3.0, rng);
    const TabularZ z2 = random_tabular_z(m.n_states, m.n_actions, 6, 3.0, rng);
    const double before = sup_wasserstein(z1, z2);
    const double after = sup_wasserstein(apply_distributional_bellman(m, pi, z1), apply_distributional_bellman(m, pi, z2));
    CHECK(after <= m.gamma * before + 1e-6);
  }
  const ContractionReport c = run_contraction_suite(25, 3);
  CHECK(c.mdps == 25);
  CHECK(c.worst_excess <= 1e-6);
}

TEST_CASE("fixed point means equal scalar policy evaluation") {
  Rng rng = make_rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    RandomMdpOptions opt;
    opt.terminal_probability = trial % 3 == 0 ? 0.3 : 0.0;
    const MdpSpec m = random_mdp(opt, rng);
    const TabularPolicy pi = random_policy(m, rng);
    const Matrix q = iterate_q(m, pi, 600);
    CHECK((policy_evaluation(m, pi) - q).cwiseAbs().maxCoeff() < 1e-9);
    const FixedPointResult fp = fixed_point(m, pi, 1e-11);
    for (Index s = 0; s < m.n_states; ++s)
      for (Index a = 0; a < m.n_actions; ++a) CHECK(std::abs(fp.z.at(s, a).mean() - q(s, a)) < 1e-6);
  }
  CHECK(run_mean_consistency(5, 5).max_error < 1e-6);
}

TEST_CASE("non-convergence is reported") {
  const MdpSpec m = single_state_mdp(0.9);
  CHECK_THROWS_AS(fixed_point(m, uniform_policy(m), 1e-6, 1), NonConvergenceError);
  CHECK_THROWS_AS(fixed_point(m, uniform_policy(m), 0.0), ContractError);
}

TEST_CASE("MDP validation and JSON") {
  MdpSpec bad = small_mdp(0.5);
  bad.transitions[0][1] = {0.5, 0.6};
  CHECK_THROWS_AS(bad.validate(), ContractError);
  MdpSpec bad_gamma = small_mdp(1.0);
  CHECK_THROWS_AS(bad_gamma.validate(), ContractError);
  CHECK_THROWS_AS(mdp_from_json(nlohmann::json::parse(R"({"states": 1})")), std::exception);

  const MdpSpec m = small_mdp(0.7);
  const nlohmann::json doc = mdp_to_json(m);
  const MdpSpec back = mdp_from_json(doc);
  CHECK(mdp_to_json(back) == doc);
  CHECK(policy_from_json(doc, m) == uniform_policy(m));
  nlohmann::json with_policy = doc;
  with_policy["policy"] = {{1.0, 0.0}, {0.5, 0.5}};
  CHECK(policy_from_json(with_policy, m)(0, 0) == 1.0);
  with_policy["policy"] = {{0.9, 0.0}, {0.5, 0.5}};
  CHECK_THROWS_AS(policy_from_json(with_policy, m), ContractError);
}

TEST_CASE("discretized BimodalGoal") {
  const MdpSpec m = discretize_bimodal_goal(0.99);
  CHECK(m.n_states == 31);
  CHECK(m.terminal[0]);
  CHECK(m.terminal[30]);
  // a step onto the right end is worth exactly the goal reward
  CHECK(-0.01 + 0.99 * m.rewards[30][0].mean() == doctest::Approx(1.0));
  CHECK(-0.01 + 0.99 * m.rewards[0][0].mean() == doctest::Approx(0.55));

  // left half goes left, right half goes right, the start flips a coin
  TabularPolicy split = Matrix::Zero(31, 3);
  for (Index s = 0; s < 31; ++s) {
    if (s < kBimodalGridStart) split(s, 0) = 1.0;
    else if (s > kBimodalGridStart) split(s, 2) = 1.0;
    else split.row(s) << 0.5, 0.0, 0.5;
  }
  const FixedPointResult fp = fixed_point(m, split, 1e-6);
  Rng rng = make_rng(6);
  const EmpiricalDistribution mc = monte_carlo_returns(m, split, kBimodalGridStart, 1, 100000, 400, rng);
  const EmpiricalDistribution& z = fp.z.at(kBimodalGridStart, 1);
  CHECK(wasserstein1(z, mc) < 0.02);
  // two separated clusters just under 0.55 and 1
  double low = 0.0, high = 0.0, between = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (z.atoms[i] < 0.7) low += z.weights[i];
    else if (z.atoms[i] > 0.8) high += z.weights[i];
    else between += z.weights[i];
  }
  CHECK(low > 0.35);
  CHECK(high > 0.35);
  CHECK(between < 0.05);

  // undiscounted optimum over 40 steps: moving right is never worse than staying
  const MdpSpec u = discretize_bimodal_goal(0.99, 1.0);
  const double opt = optimal_finite_horizon_values(u, 40, 1.0)(kBimodalGridStart);
  TabularPolicy right = Matrix::Zero(31, 3);
  right.col(2).setOnes();
  const EmpiricalDistribution go_right = monte_carlo_returns(discretize_bimodal_goal(0.999999, 1.0), right,
                                                             kBimodalGridStart, 2, 20000, 40, rng);
  CHECK(opt <= 1.0);
  CHECK(opt >= go_right.mean() - 0.01);
  CHECK(opt > 0.9);
}

}  // TEST_SUITE
