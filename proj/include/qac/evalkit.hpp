#pragma once

// Distribution-matching study: Z-network quantile samples at a fixed
// (s0, a0) against Monte Carlo discounted returns of the trained policy.

#include "qac/trainer.hpp"

#include <filesystem>

namespace qac {

/// n_taus twin-min quantile samples at fresh fractions, uniform weights.
EmpiricalDistribution znet_distribution(const TwinZ& twin, const Vector& s, const Vector& a, Index n_taus, Rng& rng);

struct EmdStudy {
  Vector s0;
  Vector a0;
  double emd = 0.0;
  double avg_return = 0.0;  // undiscounted, stochastic policy
  EmpiricalDistribution oracle;
  EmpiricalDistribution znet;
};

struct EmdOptions {
  std::size_t n_rollouts = 500;
  Index n_taus = 64;
  double gamma = 0.99;
  int return_episodes = 100;  // episodes for avg_return
};

/// s0 from env.reset, a0 sampled once from the policy, then W1 between the
/// oracle's discounted returns and the Z-network's samples at (s0, a0).
EmdStudy emd_study(const GaussianPolicyParams& policy, const TwinZ& twin, const Environment& env,
                   const EmdOptions& options, Rng& rng);
/// Checkpoint form; the checkpoint directory is only read.
EmdStudy emd_study(const LoadedAgent& agent, const Environment& env, const EmdOptions& options, Rng& rng);

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  double mass = 0.0;
};

/// n_bins equal-width bins over [min atom, max atom]; a single distinct
/// value gives one bin holding all the mass.
std::vector<HistogramBin> histogram(const EmpiricalDistribution& d, std::size_t n_bins);

/// CSV "bin_lo,bin_hi,mass".
void export_histogram(const EmpiricalDistribution& d, std::size_t n_bins, const std::filesystem::path& path);
std::vector<HistogramBin> read_histogram(const std::filesystem::path& path);

/// CSV "atom,weight".
void export_atoms(const EmpiricalDistribution& d, const std::filesystem::path& path);

/// Writes manifest.json, oracle_hist.csv, znet_hist.csv, oracle_atoms.csv,
/// znet_atoms.csv and summary.csv ("emd,avg_return") into `out`.
void write_study(const std::filesystem::path& out, const EmdStudy& study, const EmdOptions& options,
                 std::uint64_t seed, const std::string& env_name, std::size_t n_bins = 30);

}  // namespace qac
