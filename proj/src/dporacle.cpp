#include "qac/dporacle.hpp"

#include "qac/envs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace qac {

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

std::vector<double> random_simplex(std::size_t n, Rng& rng) {
  std::vector<double> w(n);
  double total = 0.0;
  for (double& x : w) {
    x = uniform_open(rng, 0.0, 1.0);
    total += x;
  }
  for (double& x : w) x /= total;
  return w;
}

std::size_t random_count(std::size_t max, Rng& rng) {
  return std::uniform_int_distribution<std::size_t>(1, max)(rng);
}

std::size_t sample_index(std::span<const double> probs, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // Rounding left u past the last cumulative sum; pick the last positive entry.
  for (std::size_t i = probs.size(); i-- > 0;)
    if (probs[i] > 0.0) return i;
  return probs.size() - 1;
}

}  // namespace

void MdpSpec::validate() const {
  require(n_states >= 1 && n_actions >= 1, "MdpSpec: need at least one state and one action");
  require(gamma >= 0.0 && gamma < 1.0, "MdpSpec: gamma must lie in [0, 1)");
  const auto ns = static_cast<std::size_t>(n_states);
  const auto na = static_cast<std::size_t>(n_actions);
  require(transitions.size() == ns && rewards.size() == ns, "MdpSpec: per-state tables have the wrong length");
  require(terminal.size() == ns, "MdpSpec: terminal flags have the wrong length");
  for (std::size_t s = 0; s < ns; ++s) {
    require(transitions[s].size() == na && rewards[s].size() == na, "MdpSpec: per-action tables have the wrong length");
    for (std::size_t a = 0; a < na; ++a) {
      const auto& row = transitions[s][a];
      require(row.size() == ns, "MdpSpec: transition row has the wrong length");
      double total = 0.0;
      for (double p : row) {
        require(std::isfinite(p) && p >= 0.0, "MdpSpec: negative transition probability");
        total += p;
      }
      require(std::abs(total - 1.0) <= 1e-9, "MdpSpec: P[" + std::to_string(s) + "][" + std::to_string(a) +
                                                 "] sums to " + std::to_string(total));
      rewards[s][a].validate();
    }
  }
}

TabularPolicy uniform_policy(const MdpSpec& mdp) {
  return Matrix::Constant(mdp.n_states, mdp.n_actions, 1.0 / static_cast<double>(mdp.n_actions));
}

void TabularZ::validate() const {
  require(table.size() == static_cast<std::size_t>(n_states * n_actions), "TabularZ: table size mismatch");
  for (const auto& d : table) d.validate();
}

TabularZ TabularZ::filled(Index n_states, Index n_actions, const EmpiricalDistribution& d) {
  TabularZ z;
  z.n_states = n_states;
  z.n_actions = n_actions;
  z.table.assign(static_cast<std::size_t>(n_states * n_actions), d);
  return z;
}

namespace {

void check_policy(const MdpSpec& mdp, const TabularPolicy& pi) {
  require_shape(pi.rows() == mdp.n_states && pi.cols() == mdp.n_actions, "policy shape does not match the MDP");
  for (Index s = 0; s < pi.rows(); ++s) {
    require((pi.row(s).array() >= 0.0).all(), "policy has a negative probability");
    require(std::abs(pi.row(s).sum() - 1.0) <= 1e-9, "policy row " + std::to_string(s) + " does not sum to 1");
  }
}

}  // namespace

TabularZ apply_distributional_bellman(const MdpSpec& mdp, const TabularPolicy& pi, const TabularZ& z,
                                      std::size_t atoms) {
  check_policy(mdp, pi);
  require_shape(z.n_states == mdp.n_states && z.n_actions == mdp.n_actions, "TabularZ does not match the MDP");
  TabularZ out;
  out.n_states = mdp.n_states;
  out.n_actions = mdp.n_actions;
  out.table.resize(z.table.size());
  std::vector<std::pair<double, double>> pairs;
  for (Index s = 0; s < mdp.n_states; ++s) {
    for (Index a = 0; a < mdp.n_actions; ++a) {
      const auto& reward = mdp.rewards[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
      pairs.clear();
      if (mdp.terminal[static_cast<std::size_t>(s)]) {
        for (std::size_t i = 0; i < reward.size(); ++i) pairs.emplace_back(reward.atoms[i], reward.weights[i]);
      } else {
        const auto& row = mdp.transitions[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
        for (std::size_t i = 0; i < reward.size(); ++i) {
          if (reward.weights[i] <= 0.0) continue;
          for (Index s2 = 0; s2 < mdp.n_states; ++s2) {
            const double p = reward.weights[i] * row[static_cast<std::size_t>(s2)];
            if (p <= 0.0) continue;
            for (Index a2 = 0; a2 < mdp.n_actions; ++a2) {
              const double q = p * pi(s2, a2);
              if (q <= 0.0) continue;
              const auto& next = z.at(s2, a2);
              for (std::size_t k = 0; k < next.size(); ++k)
                if (next.weights[k] > 0.0)
                  pairs.emplace_back(reward.atoms[i] + mdp.gamma * next.atoms[k], q * next.weights[k]);
            }
          }
        }
      }
      std::sort(pairs.begin(), pairs.end());
      out.at(s, a) = EmpiricalDistribution::uniform(project_sorted(pairs, atoms));
    }
  }
  return out;
}

double sup_wasserstein(const TabularZ& a, const TabularZ& b) {
  require_shape(a.n_states == b.n_states && a.n_actions == b.n_actions && a.table.size() == b.table.size(),
                "sup_wasserstein: tables index different state-action sets");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.table.size(); ++i) worst = std::max(worst, wasserstein1(a.table[i], b.table[i]));
  return worst;
}

FixedPointResult fixed_point(const MdpSpec& mdp, const TabularPolicy& pi, double tol, int max_iterations,
                             std::size_t atoms) {
  require(tol > 0.0, "fixed_point: tol must be > 0");
  mdp.validate();
  FixedPointResult result;
  result.z = TabularZ::filled(mdp.n_states, mdp.n_actions, EmpiricalDistribution::dirac(0.0));
  for (int it = 1; it <= max_iterations; ++it) {
    TabularZ next = apply_distributional_bellman(mdp, pi, result.z, atoms);
    result.final_gap = sup_wasserstein(next, result.z);
    result.z = std::move(next);
    result.iterations = it;
    if (result.final_gap < tol) return result;
  }
  throw NonConvergenceError("fixed_point: sup-W1 gap " + std::to_string(result.final_gap) + " still >= tol " +
                            std::to_string(tol) + " after " + std::to_string(max_iterations) +
                            " iterations (gamma = " + std::to_string(mdp.gamma) + ")");
}

Matrix expected_rewards(const MdpSpec& mdp) {
  Matrix r(mdp.n_states, mdp.n_actions);
  for (Index s = 0; s < mdp.n_states; ++s)
    for (Index a = 0; a < mdp.n_actions; ++a)
      r(s, a) = mdp.rewards[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)].mean();
  return r;
}

Matrix policy_evaluation(const MdpSpec& mdp, const TabularPolicy& pi) {
  mdp.validate();
  check_policy(mdp, pi);
  const Index ns = mdp.n_states, na = mdp.n_actions, n = ns * na;
  const Matrix r = expected_rewards(mdp);
  // q = r + gamma P_pi q over (s, a) pairs; terminal rows keep q = r.
  Matrix system = Matrix::Identity(n, n);
  Vector rhs(n);
  for (Index s = 0; s < ns; ++s) {
    for (Index a = 0; a < na; ++a) {
      const Index row = s * na + a;
      rhs(row) = r(s, a);
      if (mdp.terminal[static_cast<std::size_t>(s)]) continue;
      const auto& p = mdp.transitions[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
      for (Index s2 = 0; s2 < ns; ++s2)
        for (Index a2 = 0; a2 < na; ++a2) system(row, s2 * na + a2) -= mdp.gamma * p[static_cast<std::size_t>(s2)] * pi(s2, a2);
    }
  }
  const Vector q = system.partialPivLu().solve(rhs);
  Matrix out(ns, na);
  for (Index s = 0; s < ns; ++s)
    for (Index a = 0; a < na; ++a) out(s, a) = q(s * na + a);
  return out;
}

Vector optimal_finite_horizon_values(const MdpSpec& mdp, int horizon, double discount) {
  mdp.validate();
  require(horizon >= 0, "optimal_finite_horizon_values: negative horizon");
  const Matrix r = expected_rewards(mdp);
  Vector v = Vector::Zero(mdp.n_states);
  for (Index s = 0; s < mdp.n_states; ++s)
    if (mdp.terminal[static_cast<std::size_t>(s)]) v(s) = r.row(s).maxCoeff();
  for (int k = 0; k < horizon; ++k) {
    Vector next(mdp.n_states);
    for (Index s = 0; s < mdp.n_states; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (Index a = 0; a < mdp.n_actions; ++a) {
        double value = r(s, a);
        if (!mdp.terminal[static_cast<std::size_t>(s)]) {
          const auto& p = mdp.transitions[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
          for (Index s2 = 0; s2 < mdp.n_states; ++s2) value += discount * p[static_cast<std::size_t>(s2)] * v(s2);
        }
        best = std::max(best, value);
      }
      next(s) = best;
    }
    v = std::move(next);
  }
  return v;
}

EmpiricalDistribution monte_carlo_returns(const MdpSpec& mdp, const TabularPolicy& pi, Index s0, Index a0,
                                          std::size_t n_rollouts, int horizon, Rng& rng) {
  require(n_rollouts >= 1, "monte_carlo_returns: n_rollouts must be >= 1");
  require(s0 >= 0 && s0 < mdp.n_states && a0 >= 0 && a0 < mdp.n_actions, "monte_carlo_returns: bad start pair");
  check_policy(mdp, pi);
  std::vector<double> returns(n_rollouts);
  std::vector<double> action_probs(static_cast<std::size_t>(mdp.n_actions));
  for (double& g : returns) {
    Index s = s0, a = a0;
    double discount = 1.0;
    g = 0.0;
    for (int t = 0; t < horizon; ++t) {
      const auto& reward = mdp.rewards[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
      g += discount * reward.atoms[sample_index(reward.weights, rng)];
      if (mdp.terminal[static_cast<std::size_t>(s)]) break;
      discount *= mdp.gamma;
      s = static_cast<Index>(
          sample_index(mdp.transitions[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)], rng));
      for (Index k = 0; k < mdp.n_actions; ++k) action_probs[static_cast<std::size_t>(k)] = pi(s, k);
      a = static_cast<Index>(sample_index(action_probs, rng));
      if (t + 1 == horizon && mdp.terminal[static_cast<std::size_t>(s)]) {
        const auto& payout = mdp.rewards[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
        g += discount * payout.atoms[sample_index(payout.weights, rng)];
      }
    }
  }
  return EmpiricalDistribution::uniform(std::move(returns));
}

MdpSpec random_mdp(const RandomMdpOptions& options, Rng& rng) {
  MdpSpec mdp;
  mdp.n_states = static_cast<Index>(random_count(static_cast<std::size_t>(options.max_states), rng));
  mdp.n_actions = static_cast<Index>(random_count(static_cast<std::size_t>(options.max_actions), rng));
  mdp.gamma = options.gamma;
  const auto ns = static_cast<std::size_t>(mdp.n_states);
  const auto na = static_cast<std::size_t>(mdp.n_actions);
  mdp.transitions.assign(ns, std::vector<std::vector<double>>(na));
  mdp.rewards.assign(ns, std::vector<EmpiricalDistribution>(na));
  mdp.terminal.assign(ns, false);
  for (std::size_t s = 0; s < ns; ++s) {
    mdp.terminal[s] = uniform01(rng) < options.terminal_probability;
    for (std::size_t a = 0; a < na; ++a) {
      mdp.transitions[s][a] = random_simplex(ns, rng);
      const std::size_t k = random_count(options.max_reward_atoms, rng);
      std::vector<double> atoms(k);
      for (double& x : atoms) x = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
      mdp.rewards[s][a] = EmpiricalDistribution(std::move(atoms), random_simplex(k, rng));
    }
  }
  return mdp;
}

TabularPolicy random_policy(const MdpSpec& mdp, Rng& rng) {
  TabularPolicy pi(mdp.n_states, mdp.n_actions);
  for (Index s = 0; s < mdp.n_states; ++s) {
    const auto w = random_simplex(static_cast<std::size_t>(mdp.n_actions), rng);
    for (Index a = 0; a < mdp.n_actions; ++a) pi(s, a) = w[static_cast<std::size_t>(a)];
  }
  return pi;
}

TabularZ random_tabular_z(Index n_states, Index n_actions, std::size_t max_atoms, double scale, Rng& rng) {
  TabularZ z;
  z.n_states = n_states;
  z.n_actions = n_actions;
  z.table.resize(static_cast<std::size_t>(n_states * n_actions));
  for (auto& d : z.table) {
    const std::size_t k = random_count(max_atoms, rng);
    std::vector<double> atoms(k);
    for (double& x : atoms) x = std::uniform_real_distribution<double>(-scale, scale)(rng);
    d = EmpiricalDistribution(std::move(atoms), random_simplex(k, rng));
  }
  return z;
}

MdpSpec mdp_from_json(const nlohmann::json& doc) {
  MdpSpec mdp;
  try {
    mdp.n_states = doc.at("states").get<Index>();
    mdp.n_actions = doc.at("actions").get<Index>();
    mdp.gamma = doc.at("gamma").get<double>();
    mdp.transitions = doc.at("transitions").get<std::vector<std::vector<std::vector<double>>>>();
    for (const auto& per_state : doc.at("rewards")) {
      std::vector<EmpiricalDistribution> row;
      for (const auto& r : per_state)
        row.emplace_back(r.at("atoms").get<std::vector<double>>(), r.at("weights").get<std::vector<double>>());
      mdp.rewards.push_back(std::move(row));
    }
    if (doc.contains("terminals"))
      mdp.terminal = doc.at("terminals").get<std::vector<bool>>();
    else
      mdp.terminal.assign(static_cast<std::size_t>(std::max<Index>(mdp.n_states, 0)), false);
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("MDP document: ") + e.what());
  }
  mdp.validate();
  return mdp;
}

nlohmann::json mdp_to_json(const MdpSpec& mdp) {
  nlohmann::json doc;
  doc["states"] = mdp.n_states;
  doc["actions"] = mdp.n_actions;
  doc["gamma"] = mdp.gamma;
  doc["transitions"] = mdp.transitions;
  nlohmann::json rewards = nlohmann::json::array();
  for (const auto& per_state : mdp.rewards) {
    nlohmann::json row = nlohmann::json::array();
    for (const auto& r : per_state) row.push_back({{"atoms", r.atoms}, {"weights", r.weights}});
    rewards.push_back(std::move(row));
  }
  doc["rewards"] = std::move(rewards);
  doc["terminals"] = mdp.terminal;
  return doc;
}

MdpSpec load_mdp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open MDP file " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(path.string() + ": " + e.what());
  }
  return mdp_from_json(doc);
}

TabularPolicy policy_from_json(const nlohmann::json& doc, const MdpSpec& mdp) {
  if (!doc.contains("policy")) return uniform_policy(mdp);
  const auto rows = doc.at("policy").get<std::vector<std::vector<double>>>();
  require_shape(static_cast<Index>(rows.size()) == mdp.n_states, "policy: wrong number of rows");
  TabularPolicy pi(mdp.n_states, mdp.n_actions);
  for (Index s = 0; s < mdp.n_states; ++s) {
    require_shape(static_cast<Index>(rows[static_cast<std::size_t>(s)].size()) == mdp.n_actions,
                  "policy: wrong number of columns");
    for (Index a = 0; a < mdp.n_actions; ++a) pi(s, a) = rows[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
  }
  check_policy(mdp, pi);
  return pi;
}

MdpSpec discretize_bimodal_goal(double gamma, std::optional<double> payout_discount) {
  constexpr int kCells = 31;
  constexpr double h = 2.0 / (kCells - 1);
  constexpr double kStep = BimodalGoal::kStep, kNoise = BimodalGoal::kNoise;
  constexpr double kReach = 8.0 * kNoise;
  const double d = payout_discount.value_or(gamma);
  require(d > 0.0 && d <= 1.0, "discretize_bimodal_goal: payout discount must be in (0, 1]");
  MdpSpec mdp;
  mdp.n_states = kCells;
  mdp.n_actions = 3;
  mdp.gamma = gamma;
  mdp.transitions.assign(kCells, std::vector<std::vector<double>>(3, std::vector<double>(kCells, 0.0)));
  mdp.rewards.assign(kCells, std::vector<EmpiricalDistribution>(3));
  mdp.terminal.assign(kCells, false);
  // landing on an end pays -0.01 now and the payout one discount later, summing to the goal reward
  const double left_payout = (BimodalGoal::kLeftReward - BimodalGoal::kStepReward) / d;
  const double right_payout = (BimodalGoal::kRightReward - BimodalGoal::kStepReward) / d;
  for (int s = 0; s < kCells; ++s) {
    const double x = -1.0 + s * h;
    const bool end = s == 0 || s == kCells - 1;
    mdp.terminal[static_cast<std::size_t>(s)] = end;
    for (int a = 0; a < 3; ++a) {
      auto& row = mdp.transitions[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
      auto& reward = mdp.rewards[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
      if (end) {
        row[static_cast<std::size_t>(s)] = 1.0;
        reward = EmpiricalDistribution::dirac(s == 0 ? left_payout : right_payout);
        continue;
      }
      const double mu = x + kStep * (a - 1);
      const auto cdf = [&](double y) { return normal_cdf((y - mu) / kNoise); };
      row.front() = cdf(-1.0);
      row.back() = 1.0 - cdf(1.0);
      for (int j = 1; j < kCells - 1; ++j) {
        const double lo = j == 1 ? -1.0 : -1.0 + (j - 0.5) * h;
        const double hi = j == kCells - 2 ? 1.0 : -1.0 + (j + 0.5) * h;
        row[static_cast<std::size_t>(j)] = std::max(0.0, cdf(hi) - cdf(lo));
      }
      // cells wholly beyond 8 sigma are dropped
      for (int j = 0; j < kCells; ++j) {
        const double lo = j == 0 ? -1e300 : -1.0 + (j - 0.5) * h;
        const double hi = j == kCells - 1 ? 1e300 : -1.0 + (j + 0.5) * h;
        if (hi < mu - kReach || lo > mu + kReach) row[static_cast<std::size_t>(j)] = 0.0;
      }
      double total = 0.0;
      for (double p : row) total += p;
      for (double& p : row) p /= total;
      reward = EmpiricalDistribution::dirac(BimodalGoal::kStepReward);
    }
  }
  mdp.validate();
  return mdp;
}

}  // namespace qac
