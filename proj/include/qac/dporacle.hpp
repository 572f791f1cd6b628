#pragma once

// Exact distributional dynamic programming on finite MDPs.
//
// Return distributions are held as atom sets. After each application of the
// policy-evaluation operator (a' ~ pi) every entry is projected onto 512
// equally weighted atoms by averaging the inverse CDF over each quantile bin;
// this projection preserves means and never increases W1, so the projected
// operator stays a gamma-contraction in sup-W1.

#include "qac/distmath.hpp"

#include <filesystem>
#include <optional>
#include <json.hpp>
#include <stdexcept>

namespace qac {

inline constexpr std::size_t kProjectionAtoms = 512;

struct MdpSpec {
  Index n_states = 0;
  Index n_actions = 0;
  std::vector<std::vector<std::vector<double>>> transitions;  // [s][a][s']
  std::vector<std::vector<EmpiricalDistribution>> rewards;    // [s][a]
  double gamma = 0.9;
  std::vector<bool> terminal;  // terminal states pay their reward and stop

  void validate() const;
};

/// Rows are action distributions, one per state.
using TabularPolicy = Matrix;

TabularPolicy uniform_policy(const MdpSpec& mdp);

struct TabularZ {
  Index n_states = 0;
  Index n_actions = 0;
  std::vector<EmpiricalDistribution> table;  // index s * n_actions + a

  const EmpiricalDistribution& at(Index s, Index a) const { return table[static_cast<std::size_t>(s * n_actions + a)]; }
  EmpiricalDistribution& at(Index s, Index a) { return table[static_cast<std::size_t>(s * n_actions + a)]; }
  void validate() const;

  static TabularZ filled(Index n_states, Index n_actions, const EmpiricalDistribution& d);
};

/// (TZ)(s,a) = R(s,a) + gamma Z(s', a'), s' ~ P(.|s,a), a' ~ pi(.|s'); terminal
/// states return R(s,a). Each entry is then projected onto `atoms` atoms.
TabularZ apply_distributional_bellman(const MdpSpec& mdp, const TabularPolicy& pi, const TabularZ& z,
                                      std::size_t atoms = kProjectionAtoms);

/// max over (s, a) of W1.
double sup_wasserstein(const TabularZ& a, const TabularZ& b);

class NonConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FixedPointResult {
  TabularZ z;
  int iterations = 0;
  double final_gap = 0.0;
};

/// Iterates from Z = delta_0 until sup-W1 between successive iterates < tol.
FixedPointResult fixed_point(const MdpSpec& mdp, const TabularPolicy& pi, double tol, int max_iterations = 10000,
                             std::size_t atoms = kProjectionAtoms);

/// Scalar Q^pi by solving the linear policy-evaluation system; n_states x n_actions.
Matrix policy_evaluation(const MdpSpec& mdp, const TabularPolicy& pi);

/// Expected reward of (s, a): the mean of R(s, a).
Matrix expected_rewards(const MdpSpec& mdp);

/// Optimal expected return over `horizon` steps with per-step discount
/// `discount` (1 for undiscounted); one value per start state. A terminal
/// state pays its reward without consuming a step.
Vector optimal_finite_horizon_values(const MdpSpec& mdp, int horizon, double discount);

/// Monte Carlo discounted returns from (s0, a0), truncated at `horizon` steps;
/// a terminal state reached on the last step still pays.
EmpiricalDistribution monte_carlo_returns(const MdpSpec& mdp, const TabularPolicy& pi, Index s0, Index a0,
                                          std::size_t n_rollouts, int horizon, Rng& rng);

struct RandomMdpOptions {
  Index max_states = 5;
  Index max_actions = 3;
  std::size_t max_reward_atoms = 4;
  double gamma = 0.9;
  double terminal_probability = 0.0;
};

MdpSpec random_mdp(const RandomMdpOptions& options, Rng& rng);
TabularPolicy random_policy(const MdpSpec& mdp, Rng& rng);
TabularZ random_tabular_z(Index n_states, Index n_actions, std::size_t max_atoms, double scale, Rng& rng);

/// JSON schema: {"states", "actions", "gamma", "transitions": [s][a][s'],
/// "rewards": [s][a] -> {"atoms": [...], "weights": [...]}, "terminals": [bool] (optional),
/// "policy": [s][a] (optional, uniform when absent)}.
MdpSpec mdp_from_json(const nlohmann::json& doc);
nlohmann::json mdp_to_json(const MdpSpec& mdp);
MdpSpec load_mdp(const std::filesystem::path& path);
/// Optional "policy" field of an MDP document, uniform when absent.
TabularPolicy policy_from_json(const nlohmann::json& doc, const MdpSpec& mdp);

/// BimodalGoal on a 31-point grid over [-1, 1] with actions {-1, 0, +1}.
/// Interior moves pay the step reward and land by Gaussian cell mass (cut at
/// 8 sigma). Grid ends are terminal and pay (goal - step) / payout_discount,
/// so a landing step is worth exactly the goal reward when the payout
/// discount equals gamma (the default). Pass 1 for undiscounted horizon sums.
MdpSpec discretize_bimodal_goal(double gamma, std::optional<double> payout_discount = std::nullopt);
/// Grid index of x = 0, the BimodalGoal start.
inline constexpr Index kBimodalGridStart = 15;

}  // namespace qac
