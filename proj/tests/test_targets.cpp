#include "qac/nn/gradcheck.hpp"
#include "qac/targets.hpp"
#include "rigs.hpp"
#include "support.hpp"

#include <algorithm>
#include <doctest.h>

using namespace qac;
using testing::constant_twin;
using testing::fixed_policy;
using testing::random_matrix;

namespace {

const ZNetConfig kCfg{2, 1, 12, 16};

QuantileCritic constant_critic(double c) {
  return [c](const Matrix& s, const Matrix&, const Matrix& taus) { return Matrix::Constant(s.rows(), taus.cols(), c); };
}

TwinQ constant_twin_q(double c, Rng& rng) {
  TwinQ q = make_twin_q(2, 1, 8, rng);
  nn::set_zero(q);
  q.online1.layers.back().bias(0, 0) = q.target1.layers.back().bias(0, 0) = c;
  q.online2.layers.back().bias(0, 0) = q.target2.layers.back().bias(0, 0) = c + 1.0;
  return q;
}

// (1/T) sum_i sum_t rho_tau_i(target_t - pred_i), spelled out.
double loop_loss(const std::vector<double>& preds, const std::vector<double>& taus, const std::vector<double>& targets,
                 double kappa) {
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    for (double t : targets) total += quantile_huber(t - preds[i], taus[i], kappa);
  return total / static_cast<double>(targets.size());
}

}  // namespace

TEST_SUITE("targets") {

TEST_CASE("classic target examples") {
  Rng rng = make_rng(1);
  const GaussianPolicyParams policy = make_policy({2, 1, 8}, rng);
  const TwinQ q = constant_twin_q(3.0, rng);
  const Vector s = Vector::Random(2);
  CHECK(classic_target(1.0, true, s, policy, q, 0.5, 0.99, rng) == 1.0);
  CHECK(classic_target(1.0, false, s, policy, q, 0.5, 0.0, rng) == 1.0);
  // min of the constant twins is 3
  CHECK(classic_target(1.0, false, s, policy, q, 0.0, 0.9, rng) == doctest::Approx(1.0 + 0.9 * 3.0));
  Rng r1 = make_rng(5), r2 = make_rng(5);
  const double with_entropy = classic_target(1.0, false, s, policy, q, 0.2, 0.9, r1);
  const double logp = sample_action(policy, s, r2).log_prob;
  CHECK(with_entropy == doctest::Approx(1.0 + 0.9 * (3.0 - 0.2 * logp)));
}

TEST_CASE("single-sample target examples") {
  Rng rng = make_rng(2);
  const GaussianPolicyParams policy = make_policy({2, 1, 8}, rng);
  const CriticHyper hyper{0.9, 4, 5, 1, 1.0};
  const TargetAtoms done = single_sample_target(1.5, true, Vector::Zero(2), policy, constant_critic(7.0), 0.3, hyper, rng);
  CHECK(done.atoms.rows() == 5);
  CHECK(done.atoms.cols() == 1);
  CHECK((done.atoms.array() == 1.5).all());
  const TargetAtoms c = single_sample_target(1.0, false, Vector::Zero(2), policy, constant_critic(3.0), 0.0, hyper, rng);
  CHECK(((c.atoms.array() - (1.0 + 0.9 * 3.0)).abs() < 1e-12).all());
  // distinct fractions
  std::vector<double> t(c.taus.data(), c.taus.data() + c.taus.size());
  std::sort(t.begin(), t.end());
  CHECK(std::adjacent_find(t.begin(), t.end()) == t.end());
}

TEST_CASE("MTV target examples") {
  Rng rng = make_rng(3);
  const GaussianPolicyParams policy = make_policy({2, 1, 8}, rng);
  CriticHyper hyper{0.5, 4, 2, 3, 1.0};
  const TargetAtoms done = mtv_targets(1.0, true, Vector::Zero(2), policy, constant_critic(3.0), 0.4, hyper, rng);
  CHECK(done.atoms.size() == 6);
  CHECK((done.atoms.array() == 1.0).all());
  const TargetAtoms c = mtv_targets(1.0, false, Vector::Zero(2), policy, constant_critic(3.0), 0.0, hyper, rng);
  CHECK(c.atoms.rows() == 2);
  CHECK(c.atoms.cols() == 3);
  CHECK(((c.atoms.array() - 2.5).abs() < 1e-12).all());

  // constant critic, alpha 0: the atom mean does not depend on K or M
  for (Index k : {1, 4, 9})
    for (Index m : {1, 3, 8}) {
      hyper.k = k;
      hyper.m = m;
      const TargetAtoms t = mtv_targets(0.2, false, Vector::Zero(2), policy, constant_critic(-1.0), 0.0, hyper, rng);
      CHECK(t.atoms.mean() == doctest::Approx(0.2 - 0.5));
    }
}

TEST_CASE("MTV atom mean matches the exact mixture expectation") {
  Rng rng = make_rng(4);
  // pi = tanh(N(0, 1)): P(a > 0) = 1/2; Z = 10 when a > 0 else 0
  const GaussianPolicyParams policy = fixed_policy(2, 1, 0.0, 0.0, rng);
  const QuantileCritic step = [](const Matrix& s, const Matrix& a, const Matrix& taus) {
    Matrix z(s.rows(), taus.cols());
    for (Index r = 0; r < s.rows(); ++r) z.row(r).setConstant(a(r, 0) > 0 ? 10.0 : 0.0);
    return z;
  };
  const CriticHyper hyper{0.9, 4, 2, 20000, 1.0};
  const TargetAtoms t = mtv_targets(0.5, false, Vector::Zero(2), policy, step, 0.0, hyper, rng);
  const double expected = 0.5 + 0.9 * 10.0 * 0.5;
  const double sd = 0.9 * 10.0 * 0.5 / std::sqrt(20000.0);
  CHECK(std::abs(t.atoms.mean() - expected) < 5 * sd);
  // each action's fractions are its own
  for (Index k = 0; k + 1 < 20; ++k) CHECK(t.taus(0, k) != t.taus(0, k + 1));
}

TEST_CASE("entropy correction uses each atom's own action") {
  Rng rng = make_rng(5);
  const GaussianPolicyParams policy = make_policy({2, 1, 8}, rng);
  const CriticHyper hyper{0.9, 4, 3, 4, 1.0};
  Rng r1 = make_rng(6), r2 = make_rng(6);
  const TargetAtoms t = mtv_targets(0.0, false, Vector::Ones(2), policy, constant_critic(0.0), 1.0, hyper, r1);
  const Matrix noise = standard_normal(r2, 4, 1);
  const ActionBatch b = sample_actions_with_noise(policy, Matrix::Ones(4, 2), noise);
  for (Index k = 0; k < 4; ++k)
    for (Index j = 0; j < 3; ++j) CHECK(t.atoms(j, k) == doctest::Approx(-0.9 * b.log_probs(k)));
}

TEST_CASE("K = 1 reduction over 1000 random transitions") {
  Rng rng = make_rng(7);
  const GaussianPolicyParams policy = make_policy({2, 1, 8}, rng);
  const TwinZ twin = make_twin_z(kCfg, rng);
  const CriticHyper hyper{0.99, 8, 6, 1, 1.0};
  for (int i = 0; i < 1000; ++i) {
    const double r = standard_normal(rng);
    const bool done = uniform01(rng) < 0.2;
    const Vector s2 = random_matrix(2, 1, rng);
    const std::uint64_t seed = rng();
    Rng a = make_rng(seed), b = make_rng(seed);
    const TargetAtoms single = single_sample_target(r, done, s2, policy, target_min_critic(twin), 0.2, hyper, a);
    const TargetAtoms multi = mtv_targets(r, done, s2, policy, target_min_critic(twin), 0.2, hyper, b);
    REQUIRE(single.atoms.size() == multi.atoms.size());
    CHECK(std::memcmp(single.atoms.data(), multi.atoms.data(), sizeof(double) * 6) == 0);
    CHECK(a() == b());
  }
  // batch forms agree too, and so do the losses built from them
  const Vector rewards = random_matrix(16, 1, rng);
  const Vector dones = (random_matrix(16, 1, rng).array() > 0.6).cast<double>();
  const Matrix s2 = random_matrix(16, 2, rng);
  Rng a = make_rng(8), b = make_rng(8);
  const Matrix y1 = single_sample_target_batch(rewards, dones, s2, policy, target_min_critic(twin), 0.2, hyper, a);
  const Matrix y2 = mtv_target_batch(rewards, dones, s2, policy, target_min_critic(twin), 0.2, hyper, b);
  CHECK(y1 == y2);
  const Matrix s = random_matrix(16, 2, rng), act = random_matrix(16, 1, rng);
  CHECK(twin_quantile_loss(twin, s, act, y1, hyper, a).loss == twin_quantile_loss(twin, s, act, y2, hyper, b).loss);
}

TEST_CASE("batch targets match the per-transition form") {
  Rng rng = make_rng(9);
  const GaussianPolicyParams policy = make_policy({2, 1, 8}, rng);
  const TwinZ twin = make_twin_z(kCfg, rng);
  const CriticHyper hyper{0.95, 8, 3, 4, 1.0};
  const Vector rewards = random_matrix(5, 1, rng);
  Vector dones = Vector::Zero(5);
  dones(2) = 1.0;
  const Matrix s2 = random_matrix(5, 2, rng);
  Rng a = make_rng(10), b = make_rng(10);
  const Matrix batch = mtv_target_batch(rewards, dones, s2, policy, target_min_critic(twin), 0.1, hyper, a);
  for (Index i = 0; i < 5; ++i) {
    const TargetAtoms t = mtv_targets(rewards(i), dones(i) != 0.0, s2.row(i).transpose(), policy, target_min_critic(twin),
                                      0.1, hyper, b);
    const auto flat = t.flat();
    for (Index c = 0; c < 12; ++c) CHECK(batch(i, c) == doctest::Approx(flat[c]).epsilon(1e-12));
  }
  CHECK(a() == b());
}

TEST_CASE("targets read the target critics, not the online ones") {
  Rng rng = make_rng(11);
  const GaussianPolicyParams policy = make_policy({2, 1, 8}, rng);
  TwinZ twin = constant_twin(kCfg, 1.0, 2.0, rng);
  twin.online1 = testing::constant_znet(kCfg, 100.0, rng);
  twin.online2 = testing::constant_znet(kCfg, 100.0, rng);
  const CriticHyper hyper{0.5, 4, 3, 2, 1.0};
  const TargetAtoms t = mtv_targets(0.0, false, Vector::Zero(2), policy, target_min_critic(twin), 0.0, hyper, rng);
  CHECK(((t.atoms.array() - 0.5).abs() < 1e-12).all());
}

TEST_CASE("quantile regression loss matches the written-out sum") {
  Rng rng = make_rng(12);
  const ZNetworkParams z = make_znet(kCfg, rng);
  const Matrix s = random_matrix(3, 2, rng), a = random_matrix(3, 1, rng);
  const Matrix targets = random_matrix(3, 5, rng, 3.0), taus = sample_fraction_matrix(3, 4, rng);
  const Matrix pred = z_values(z, s, a, taus);
  double expected = 0.0;
  for (Index b = 0; b < 3; ++b) {
    std::vector<double> p(4), t(4), y(5);
    for (Index i = 0; i < 4; ++i) p[i] = pred(b, i), t[i] = taus(b, i);
    for (Index j = 0; j < 5; ++j) y[j] = targets(b, j);
    expected += loop_loss(p, t, y, 1.0);
  }
  expected /= 3.0;
  CHECK(quantile_regression_loss_value(z, s, a, targets, taus, 1.0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("MTV loss examples") {
  Rng rng = make_rng(13);
  const TwinZ twin = constant_twin(kCfg, 0.75, 0.75, rng);
  TargetAtoms atoms{Matrix::Constant(3, 2, 0.75), Matrix::Constant(3, 2, 0.5)};
  const CriticHyper hyper{0.99, 8, 3, 2, 1.0};
  CHECK(mtv_loss(twin, Vector::Zero(2), Vector::Zero(1), atoms, hyper, rng) == 0.0);

  // tau = 0.5 against atoms {-1, +1}: a 1-D scan puts the minimiser at 0
  double best_z = 0.0, best = std::numeric_limits<double>::infinity();
  for (int i = -200; i <= 200; ++i) {
    const double zz = i / 100.0;
    const double l = loop_loss({zz}, {0.5}, {-1.0, 1.0}, 1.0);
    if (l < best - 1e-15) best = l, best_z = zz;
  }
  CHECK(std::abs(best_z) <= 0.01);
  nn::Tape tape;
  nn::Var p = tape.leaf(Matrix::Zero(1, 1), true);
  nn::Var loss = nn::quantile_huber_loss(p, (Matrix(1, 2) << -1.0, 1.0).finished(), Matrix::Constant(1, 1, 0.5), 1.0);
  CHECK(loss.value()(0, 0) == doctest::Approx(0.5 * (0.25 + 0.25)));
  tape.backward(loss);
  CHECK(tape.grad(p)(0, 0) == doctest::Approx(0.0));
}

TEST_CASE("free per-fraction table converges to the atom-set quantiles") {
  Rng rng = make_rng(14);
  std::vector<double> atoms(40);
  for (double& x : atoms) x = 2.0 * standard_normal(rng) + (uniform01(rng) < 0.5 ? -3.0 : 3.0);
  std::vector<double> sorted = atoms;
  std::sort(sorted.begin(), sorted.end());
  const Matrix targets = Eigen::Map<const Matrix>(atoms.data(), 1, 40);
  const std::vector<double> fractions{0.1, 0.3, 0.5, 0.7, 0.9};
  const Matrix taus = Eigen::Map<const Matrix>(fractions.data(), 1, 5);
  nn::Linear table{Matrix::Zero(1, 5), Matrix::Zero(1, 1)};
  nn::AdamState opt = nn::make_adam(table, 0.05);
  for (int step = 0; step < 4000; ++step) {
    nn::Tape tape;
    auto vars = nn::bind(tape, table, true);
    tape.backward(nn::quantile_huber_loss(vars[0], targets, taus, 1e-3));
    nn::adam_step(opt, table, nn::gradients(tape, vars));
  }
  double max_gap = 0.0;
  for (std::size_t i = 1; i < sorted.size(); ++i) max_gap = std::max(max_gap, sorted[i] - sorted[i - 1]);
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const double q = sorted[static_cast<std::size_t>(std::ceil(fractions[i] * 40)) - 1];
    CHECK(std::abs(table.weight(0, i) - q) <= max_gap + 1e-6);
  }
}

TEST_CASE("twin quantile loss is the sum of both critics and its gradients check out") {
  Rng rng = make_rng(15);
  const TwinZ twin = make_twin_z(kCfg, rng);
  const Matrix s = random_matrix(4, 2, rng), a = random_matrix(4, 1, rng), y = random_matrix(4, 6, rng, 2.0);
  const CriticHyper hyper{0.99, 5, 3, 2, 1.0};
  Rng r1 = make_rng(16), r2 = make_rng(16);
  const TwinLossResult res = twin_quantile_loss(twin, s, a, y, hyper, r1);
  const Matrix taus = sample_fraction_matrix(4, 5, r2);
  const double l1 = quantile_regression_loss_value(twin.online1, s, a, y, taus, 1.0);
  const double l2 = quantile_regression_loss_value(twin.online2, s, a, y, taus, 1.0);
  CHECK(res.loss == doctest::Approx(l1 + l2).epsilon(1e-12));
  const std::function<double(const ZNetworkParams&)> f1 = [&](const ZNetworkParams& z) {
    return quantile_regression_loss_value(z, s, a, y, taus, 1.0);
  };
  CHECK(nn::finite_diff_check(f1, twin.online1, res.grads1) < 1e-5);
  CHECK(nn::finite_diff_check(f1, twin.online2, res.grads2) < 1e-5);
}

TEST_CASE("scalar twin loss") {
  Rng rng = make_rng(17);
  const TwinQ q = make_twin_q(2, 1, 8, rng);
  const Matrix s = random_matrix(6, 2, rng), a = random_matrix(6, 1, rng), y = random_matrix(6, 1, rng);
  const TwinLossResult r = twin_mse_loss(q, s, a, y);
  const double l1 = (q_values(q.online1, s, a) - y).squaredNorm() / 6.0;
  const double l2 = (q_values(q.online2, s, a) - y).squaredNorm() / 6.0;
  CHECK(r.loss == doctest::Approx(l1 + l2));
  const std::function<double(const nn::MlpParams&)> f = [&](const nn::MlpParams& p) { return mse_loss_value(p, s, a, y); };
  CHECK(nn::finite_diff_check(f, q.online2, r.grads2) < 1e-6);
}

TEST_CASE("hyperparameter validation") {
  CHECK_THROWS_AS((CriticHyper{1.0, 1, 1, 1, 1.0}.validate()), ContractError);
  CHECK_THROWS_AS((CriticHyper{0.9, 0, 1, 1, 1.0}.validate()), ContractError);
  CHECK_THROWS_AS((CriticHyper{0.9, 1, 1, 1, 0.0}.validate()), ContractError);
  CHECK_NOTHROW((CriticHyper{0.0, 1, 1, 1, 1.0}.validate()));
}

}  // TEST_SUITE
