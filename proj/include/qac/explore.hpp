#pragma once

// Interaction-time action selection: plain policy sampling or UCB over L
// sampled candidates scored by mu + lambda * sigma of twin-min quantile samples.

#include "qac/actor.hpp"

namespace qac {

struct UcbConfig {
  Index candidates = 12;  // L
  double lambda = 50.0;
  Index n_taus = 64;

  void validate() const;
};

struct UcbStats {
  double mu = 0.0;
  double sigma = 0.0;
};

/// Population mean / std of n_taus quantile samples at fresh fractions.
UcbStats ucb_score(const QuantileCritic& critic, const Vector& s, const Vector& a, const UcbConfig& cfg, Rng& rng);
UcbStats ucb_score(const TwinZ& twin, const Vector& s, const Vector& a, const UcbConfig& cfg, Rng& rng);

/// Index maximising mu + lambda * sigma; ties go to the lowest index.
std::size_t ucb_argmax(std::span<const UcbStats> stats, double lambda);

struct UcbChoice {
  Vector action;
  std::size_t index = 0;
  Matrix candidates;  // L x da
  std::vector<UcbStats> stats;
};

/// Samples L candidates from the policy, then n_taus fractions per candidate.
UcbChoice ucb_select(const GaussianPolicyParams& policy, const QuantileCritic& critic, const Vector& s,
                     const UcbConfig& cfg, Rng& rng);
UcbChoice ucb_select(const GaussianPolicyParams& policy, const TwinZ& twin, const Vector& s, const UcbConfig& cfg,
                     Rng& rng);

/// Number of ucb_select calls on this thread. Instrumentation only.
std::uint64_t ucb_select_count();

}  // namespace qac
