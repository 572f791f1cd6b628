#include "qac/actor.hpp"
#include "qac/nn/gradcheck.hpp"
#include "rigs.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace qac;
using testing::fixed_policy;
using testing::random_matrix;

namespace {

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2 * std::numbers::pi); }

// Differential entropy of tanh(mu + sigma xi) by midpoint quadrature in action space.
double squashed_entropy_quadrature(double mu, double sigma, int n = 400000) {
  double h = 0.0;
  const double da = 2.0 / n;
  for (int i = 0; i < n; ++i) {
    const double a = -1.0 + (i + 0.5) * da;
    const double p = normal_pdf((std::atanh(a) - mu) / sigma) / sigma / (1.0 - a * a);
    if (p > 0) h -= p * std::log(p) * da;
  }
  return h;
}

DifferentiableQ constant_q(double c) {
  return [c](nn::Tape& tape, nn::Var states, nn::Var) { return tape.constant(Matrix::Constant(states.rows(), 1, c)); };
}

// Q(s, a) = a w
DifferentiableQ linear_q(const Matrix& w) {
  return [w](nn::Tape& tape, nn::Var, nn::Var actions) { return nn::matmul(actions, tape.constant(w)); };
}

}  // namespace

TEST_SUITE("actor") {

TEST_CASE("sigma at the clamp floor: the sample is tanh(mu)") {
  Rng rng = make_rng(1);
  const auto p = fixed_policy(2, 2, 0.4, -50.0, rng);  // clamped to -20
  for (int i = 0; i < 20; ++i) {
    const auto s = sample_action(p, Vector::Random(2), rng);
    CHECK(s.action(0) == doctest::Approx(std::tanh(0.4)).epsilon(1e-7));  // sigma = e^-20
    CHECK(std::isfinite(s.log_prob));
  }
}

TEST_CASE("mu = 0, xi = 0: a = 0 and logp is the Gaussian log-density at the mode") {
  Rng rng = make_rng(2);
  const double log_sigma = 1.5;
  const auto p = fixed_policy(1, 3, 0.0, log_sigma, rng);
  const ActionBatch b = sample_actions_with_noise(p, Matrix::Zero(1, 1), Matrix::Zero(1, 3));
  CHECK(b.actions.cwiseAbs().maxCoeff() == 0.0);
  const double expected = 3.0 * (-0.5 * std::log(2 * std::numbers::pi) - log_sigma);
  CHECK(b.log_probs(0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("log-density matches the change-of-variables formula") {
  Rng rng = make_rng(3);
  const GaussianPolicyParams p = fixed_policy(1, 1, -0.3, std::log(0.7), rng);
  for (int i = 0; i < 50; ++i) {
    const double xi = 2.5 * standard_normal(rng);
    const ActionBatch b = sample_actions_with_noise(p, Matrix::Zero(1, 1), Matrix::Constant(1, 1, xi));
    const double a = b.actions(0, 0);
    const double direct = std::log(normal_pdf((std::atanh(a) + 0.3) / 0.7) / 0.7 / (1 - a * a));
    CHECK(b.log_probs(0) == doctest::Approx(direct).epsilon(1e-6));
  }
}

TEST_CASE("Monte Carlo entropy agrees with quadrature") {
  Rng rng = make_rng(4);
  for (auto [mu, sigma] : {std::pair{0.0, 1.0}, std::pair{0.3, 0.8}, std::pair{-1.2, 0.4}}) {
    const auto p = fixed_policy(1, 1, mu, std::log(sigma), rng);
    const ActionBatch b = sample_actions(p, Matrix::Zero(100000, 1), rng);
    const double mc = -b.log_probs.mean();
    CHECK(mc == doctest::Approx(squashed_entropy_quadrature(mu, sigma)).epsilon(0.01));
  }
}

TEST_CASE("actions stay strictly inside the box with finite log-densities") {
  Rng rng = make_rng(5);
  for (double mu : {-40.0, -3.0, 0.0, 3.0, 40.0})
    for (double ls : {-20.0, 0.0, 2.0}) {
      const auto p = fixed_policy(2, 2, mu, ls, rng);
      const ActionBatch b = sample_actions(p, random_matrix(200, 2, rng), rng);
      CHECK(b.actions.cwiseAbs().maxCoeff() < 1.0);
      CHECK(b.log_probs.allFinite());
      CHECK(deterministic_actions(p, random_matrix(5, 2, rng)).cwiseAbs().maxCoeff() < 1.0);
    }
}

TEST_CASE("deterministic action") {
  Rng rng = make_rng(6);
  GaussianPolicyParams zero = make_policy({3, 2, 8}, rng);
  nn::set_zero(zero);
  CHECK(deterministic_action(zero, Vector::Random(3)).cwiseAbs().maxCoeff() == 0.0);
  for (int i = 0; i < 10; ++i) {
    const GaussianPolicyParams p = make_policy({3, 2, 8}, rng);
    const Vector s = random_matrix(3, 1, rng, 2.0);
    const Vector a = deterministic_action(p, s);
    CHECK(a == deterministic_action(p, s));
    const ActionBatch b = sample_actions_with_noise(p, s.transpose(), Matrix::Zero(1, 2));
    CHECK((b.actions.row(0).transpose() - a).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("policy loss: constant critic and alpha ~ 0 gives ~zero gradient") {
  Rng rng = make_rng(7);
  const GaussianPolicyParams p = make_policy({2, 1, 8}, rng);
  const EntropyTemp temp = EntropyTemp::with_alpha(1e-300, -1.0);
  const PolicyLossResult r = policy_loss(p, temp, constant_q(4.0), random_matrix(16, 2, rng), rng);
  CHECK(r.loss == doctest::Approx(-4.0));
  for (const Matrix& g : r.grads) CHECK(g.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("policy loss: a critic rewarding the first action pushes its mean upward") {
  Rng rng = make_rng(8);
  GaussianPolicyParams p = make_policy({2, 2, 8}, rng);
  const EntropyTemp temp = EntropyTemp::with_alpha(0.01, -2.0);
  Matrix w = Matrix::Zero(2, 1);
  w(0, 0) = 10.0;
  const Matrix states = random_matrix(32, 2, rng);
  Rng noise_rng = rng;
  const PolicyLossResult r = policy_loss(p, temp, linear_q(w), states, rng);
  const Matrix noise = standard_normal(noise_rng, 32, 2);
  const double h = 1e-5;
  auto loss_at = [&](double shift) {
    GaussianPolicyParams q = p;
    q.mean_head.bias(0, 0) += shift;
    return policy_loss_value(q, temp, linear_q(w), states, noise);
  };
  const double fd = (loss_at(h) - loss_at(-h)) / (2 * h);
  CHECK(fd < 0.0);
  // visit order: trunk (4 tensors), mean weight, mean bias, ...
  CHECK(r.grads[5](0, 0) == doctest::Approx(fd).epsilon(1e-6));
  CHECK(r.grads[5](0, 0) < 0.0);
}

TEST_CASE("policy loss gradients match finite differences") {
  Rng rng = make_rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    GaussianPolicyParams p = make_policy({2, 2, 12}, rng);
    p.mean_head = nn::make_linear(12, 2, rng);
    p.log_std_head = nn::make_linear(12, 2, rng);
    const EntropyTemp temp = EntropyTemp::with_alpha(0.5, -2.0);
    const Matrix w = random_matrix(2, 1, rng, 3.0);
    const Matrix states = random_matrix(8, 2, rng);
    Rng noise_rng = rng;
    const PolicyLossResult r = policy_loss(p, temp, linear_q(w), states, rng);
    const Matrix noise = standard_normal(noise_rng, 8, 2);
    const std::function<double(const GaussianPolicyParams&)> f = [&](const GaussianPolicyParams& q) {
      return policy_loss_value(q, temp, linear_q(w), states, noise);
    };
    CHECK(nn::finite_diff_check(f, p, r.grads) < 1e-5);
  }
}

TEST_CASE("temperature loss") {
  const EntropyTemp temp = EntropyTemp::with_alpha(0.3, -2.0);
  const std::vector<double> equilibrium(10, 2.0);  // logp = -target
  CHECK(alpha_loss_gradient(temp, equilibrium)[0](0, 0) == 0.0);
  // entropy below target: logp > -target, the update raises alpha
  const std::vector<double> low_entropy(10, 3.0);
  EntropyTemp t = temp;
  nn::AdamState opt = nn::make_adam(t, 0.01);
  alpha_step(t, alpha_loss_gradient(t, low_entropy), opt);
  CHECK(t.alpha() > temp.alpha());
  const std::vector<double> high_entropy(10, -1.0);
  EntropyTemp t2 = temp;
  nn::AdamState opt2 = nn::make_adam(t2, 0.01);
  alpha_step(t2, alpha_loss_gradient(t2, high_entropy), opt2);
  CHECK(t2.alpha() < temp.alpha());
  CHECK(alpha_loss(temp, low_entropy) == doctest::Approx(-std::log(0.3) * 1.0));
  CHECK_THROWS_AS(alpha_loss(temp, std::vector<double>{}), ContractError);
  CHECK_THROWS_AS(EntropyTemp::with_alpha(0.0, -1.0), ContractError);

  Rng rng = make_rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> lps(7);
    for (double& x : lps) x = 4.0 * standard_normal(rng);
    const EntropyTemp tt = EntropyTemp::with_alpha(0.05 + uniform01(rng), -1.5);
    const std::function<double(const EntropyTemp&)> f = [&](const EntropyTemp& e) { return alpha_loss(e, lps); };
    CHECK(nn::finite_diff_check(f, tt, alpha_loss_gradient(tt, lps)) < 1e-8);
  }
}

TEST_CASE("alpha stays positive under repeated large steps") {
  EntropyTemp t = EntropyTemp::with_alpha(1.0, -1.0);
  nn::AdamState opt = nn::make_adam(t, 0.5);
  const std::vector<double> high_entropy(4, -50.0);
  for (int i = 0; i < 500; ++i) {
    alpha_step(t, alpha_loss_gradient(t, high_entropy), opt);
    CHECK(t.alpha() > 0.0);
  }
}

TEST_CASE("closed-loop bandit: temperature tuning reaches the target entropy") {
  Rng rng = make_rng(11);
  GaussianPolicyParams p = make_policy({1, 1, 16}, rng);
  EntropyTemp temp = EntropyTemp::with_alpha(1.0, -1.0);
  nn::AdamState popt = nn::make_adam(p, 3e-3), aopt = nn::make_adam(temp, 3e-3);
  // Q(a) = -4 a^2 prefers a narrow policy at 0, the entropy bonus pulls the other way
  const DifferentiableQ q = [](nn::Tape&, nn::Var, nn::Var a) { return -4.0 * (a * a); };
  const Matrix states = Matrix::Zero(128, 1);
  for (int step = 0; step < 4000; ++step) {
    const PolicyLossResult r = policy_loss(p, temp, q, states, rng);
    nn::adam_step(popt, p, r.grads);
    const std::vector<double> lps(r.log_probs.data(), r.log_probs.data() + r.log_probs.size());
    alpha_step(temp, alpha_loss_gradient(temp, lps), aopt);
  }
  const ActionBatch b = sample_actions(p, Matrix::Zero(50000, 1), rng);
  const double entropy = -b.log_probs.mean();
  CHECK(std::abs(entropy - temp.target_entropy) < 0.1 * std::abs(temp.target_entropy));
}

}  // TEST_SUITE
