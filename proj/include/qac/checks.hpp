#pragma once

// Property suites shared by the command-line checks and the acceptance run.

#include "qac/dporacle.hpp"
#include "qac/targets.hpp"

namespace qac {

struct GradCheckReport {
  int trials = 0;
  double mtv = 0.0;         // worst relative error, critic quantile loss
  double policy = 0.0;      // policy loss
  double alpha = 0.0;       // temperature loss
  double sac_critic = 0.0;  // scalar twin critic loss

  double worst() const { return std::max({mtv, policy, alpha, sac_critic}); }
};

/// Finite-difference checks of every loss on `trials` random small networks
/// (at most 3 layers, at most 32 units).
GradCheckReport run_grad_checks(int trials, std::uint64_t seed);

struct ContractionReport {
  int mdps = 0;
  double worst_excess = -std::numeric_limits<double>::infinity();  // max of d(TZ1, TZ2) - gamma d(Z1, Z2)
  double worst_ratio = 0.0;                                          // max of d(TZ1, TZ2) / d(Z1, Z2)
  double worst_ratio_gamma = 0.0;                                    // gamma of that MDP
};

/// Random MDPs (<= 5 states, <= 3 actions, <= 4 reward atoms), gamma
/// alternating between 0.5 and 0.9, with random TabularZ pairs.
ContractionReport run_contraction_suite(int n_mdps, std::uint64_t seed);

struct MeanConsistencyReport {
  int mdps = 0;
  double max_error = 0.0;
};

/// |mean of the distributional fixed point - scalar Q^pi| over random MDPs.
MeanConsistencyReport run_mean_consistency(int n_mdps, std::uint64_t seed, double tol = 1e-10);

/// One state, one action, reward 1 with a self-loop.
MdpSpec single_state_mdp(double gamma);

}  // namespace qac
