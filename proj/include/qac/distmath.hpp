#pragma once

// Scalar and distributional math: Huber and quantile Huber losses,
// empirical distributions and the exact 1-Wasserstein distance.

#include "qac/core.hpp"

#include <cmath>
#include <span>
#include <utility>
#include <vector>

namespace qac {

inline constexpr double kDefaultKappa = 1.0;

template <typename Scalar>
Scalar huber(Scalar u, Scalar kappa) {
  const Scalar a = std::abs(u);
  return a <= kappa ? Scalar(0.5) * u * u : kappa * (a - Scalar(0.5) * kappa);
}

/// d huber / du, clamped to [-kappa, kappa].
template <typename Scalar>
Scalar huber_derivative(Scalar u, Scalar kappa) {
  return u > kappa ? kappa : (u < -kappa ? -kappa : u);
}

/// rho_tau(u) = |tau - 1{u < 0}| * huber(u). No 1/kappa scaling.
template <typename Scalar>
Scalar quantile_huber(Scalar u, Scalar tau, Scalar kappa) {
  const Scalar weight = std::abs(tau - (u < Scalar(0) ? Scalar(1) : Scalar(0)));
  return weight * huber(u, kappa);
}

/// d rho_tau(u) / du.
template <typename Scalar>
Scalar quantile_huber_derivative(Scalar u, Scalar tau, Scalar kappa) {
  const Scalar weight = std::abs(tau - (u < Scalar(0) ? Scalar(1) : Scalar(0)));
  return weight * huber_derivative(u, kappa);
}

/// Population mean and standard deviation (divide by N).
template <typename Scalar>
std::pair<Scalar, Scalar> mean_std(std::span<const Scalar> samples) {
  require(!samples.empty(), "mean_std: empty sample list");
  Scalar mean(0);
  for (Scalar s : samples) mean += s;
  mean /= Scalar(samples.size());
  Scalar var(0);
  for (Scalar s : samples) var += (s - mean) * (s - mean);
  var /= Scalar(samples.size());
  return {mean, std::sqrt(var)};
}

template <typename Derived>
std::pair<typename Derived::Scalar, typename Derived::Scalar> mean_std(
    const Eigen::DenseBase<Derived>& samples) {
  using Scalar = typename Derived::Scalar;
  require(samples.size() > 0, "mean_std: empty sample list");
  const Scalar mean = samples.mean();
  const Scalar var = (samples.derived().array() - mean).square().mean();
  return {mean, std::sqrt(var)};
}

/// Weighted atoms. Weights are nonnegative and sum to one.
struct EmpiricalDistribution {
  std::vector<double> atoms;
  std::vector<double> weights;

  EmpiricalDistribution() = default;
  EmpiricalDistribution(std::vector<double> atoms, std::vector<double> weights);

  /// Equal weight on every atom.
  static EmpiricalDistribution uniform(std::vector<double> atoms);
  static EmpiricalDistribution dirac(double at) { return uniform({at}); }

  std::size_t size() const { return atoms.size(); }
  double mean() const;
  double variance() const;

  /// Throws ContractError unless the invariants hold.
  void validate() const;

  /// Atoms sorted ascending with duplicate atoms merged.
  EmpiricalDistribution canonical() const;

  /// Copy with every atom moved by `shift`.
  EmpiricalDistribution shifted(double shift) const;
};

/// Exact W1 between two discrete measures: integral of |F_a - F_b|.
double wasserstein1(const EmpiricalDistribution& a, const EmpiricalDistribution& b);

/// Quantile fractions tau in [0, 1].
struct QuantileFractions {
  std::vector<double> taus;

  std::size_t size() const { return taus.size(); }
  void validate() const;
};

/// n independent Uniform[0, 1) draws.
QuantileFractions sample_fractions(std::size_t n, Rng& rng);

/// rows x cols matrix of independent Uniform[0, 1) draws, filled row by row.
Matrix sample_fraction_matrix(Index rows, Index cols, Rng& rng);

/// Number of fraction draws made through sample_fractions /
/// sample_fraction_matrix on this thread. Instrumentation only.
std::uint64_t fraction_draw_count();

/// Quantile projection onto n equally weighted atoms: atom i is the mean of
/// the inverse CDF over [i/n, (i+1)/n). Preserves the mean and never
/// increases W1 between two projected measures.
EmpiricalDistribution project_quantiles(const EmpiricalDistribution& d, std::size_t n);

/// Same projection for atoms already sorted ascending with matching weights.
std::vector<double> project_sorted(std::span<const std::pair<double, double>> sorted_atoms,
                                   std::size_t n);

}  // namespace qac
