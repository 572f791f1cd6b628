#include "qac/distmath.hpp"

#include <algorithm>
#include <numeric>

namespace qac {

namespace {
thread_local std::uint64_t g_fraction_draws = 0;
}

EmpiricalDistribution::EmpiricalDistribution(std::vector<double> a, std::vector<double> w)
    : atoms(std::move(a)), weights(std::move(w)) {
  validate();
}

EmpiricalDistribution EmpiricalDistribution::uniform(std::vector<double> atoms) {
  require(!atoms.empty(), "EmpiricalDistribution: no atoms");
  std::vector<double> w(atoms.size(), 1.0 / static_cast<double>(atoms.size()));
  return EmpiricalDistribution(std::move(atoms), std::move(w));
}

double EmpiricalDistribution::mean() const {
  double m = 0.0;
  for (std::size_t i = 0; i < atoms.size(); ++i) m += weights[i] * atoms[i];
  return m;
}

double EmpiricalDistribution::variance() const {
  const double m = mean();
  double v = 0.0;
  for (std::size_t i = 0; i < atoms.size(); ++i) v += weights[i] * (atoms[i] - m) * (atoms[i] - m);
  return v;
}

void EmpiricalDistribution::validate() const {
  require(!atoms.empty(), "EmpiricalDistribution: no atoms");
  require(atoms.size() == weights.size(), "EmpiricalDistribution: atom/weight length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    require(std::isfinite(atoms[i]), "EmpiricalDistribution: non-finite atom");
    require(weights[i] >= 0.0, "EmpiricalDistribution: negative weight");
    total += weights[i];
  }
  require(std::abs(total - 1.0) <= 1e-9, "EmpiricalDistribution: weights do not sum to 1");
}

EmpiricalDistribution EmpiricalDistribution::canonical() const {
  std::vector<std::size_t> order(atoms.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return atoms[i] < atoms[j]; });
  EmpiricalDistribution out;
  for (std::size_t i : order) {
    if (!out.atoms.empty() && out.atoms.back() == atoms[i]) {
      out.weights.back() += weights[i];
    } else {
      out.atoms.push_back(atoms[i]);
      out.weights.push_back(weights[i]);
    }
  }
  return out;
}

EmpiricalDistribution EmpiricalDistribution::shifted(double shift) const {
  EmpiricalDistribution out = *this;
  for (double& a : out.atoms) a += shift;
  return out;
}

double wasserstein1(const EmpiricalDistribution& a, const EmpiricalDistribution& b) {
  a.validate();
  b.validate();
  // Signed mass events; the running sum is F_a - F_b between consecutive atoms.
  std::vector<std::pair<double, double>> events;
  events.reserve(a.size() + b.size());
  for (std::size_t i = 0; i < a.size(); ++i) events.emplace_back(a.atoms[i], a.weights[i]);
  for (std::size_t i = 0; i < b.size(); ++i) events.emplace_back(b.atoms[i], -b.weights[i]);
  std::sort(events.begin(), events.end(),
            [](const auto& x, const auto& y) { return x.first < y.first; });
  double cdf_gap = 0.0;
  double area = 0.0;
  for (std::size_t k = 0; k + 1 < events.size(); ++k) {
    cdf_gap += events[k].second;
    area += std::abs(cdf_gap) * (events[k + 1].first - events[k].first);
  }
  return area;
}

void QuantileFractions::validate() const {
  for (double t : taus) require(t >= 0.0 && t <= 1.0, "QuantileFractions: tau outside [0, 1]");
}

QuantileFractions sample_fractions(std::size_t n, Rng& rng) {
  require(n >= 1, "sample_fractions: n must be >= 1");
  QuantileFractions f;
  f.taus.resize(n);
  for (double& t : f.taus) t = uniform01(rng);
  g_fraction_draws += n;
  return f;
}

Matrix sample_fraction_matrix(Index rows, Index cols, Rng& rng) {
  require(rows >= 1 && cols >= 1, "sample_fraction_matrix: empty shape");
  Matrix out(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) out(r, c) = uniform01(rng);
  g_fraction_draws += static_cast<std::uint64_t>(rows * cols);
  return out;
}

std::uint64_t fraction_draw_count() { return g_fraction_draws; }

std::vector<double> project_sorted(std::span<const std::pair<double, double>> sorted_atoms,
                                   std::size_t n) {
  require(n >= 1, "project_sorted: n must be >= 1");
  std::vector<double> sum(n, 0.0), mass(n, 0.0);
  const double scale = static_cast<double>(n);
  double pos = 0.0;
  for (const auto& [x, w] : sorted_atoms) {
    const double start = pos;
    const double end = pos + w * scale;
    pos = end;
    auto first = static_cast<std::size_t>(std::max(0.0, std::floor(start)));
    auto last = static_cast<std::size_t>(std::max(0.0, std::floor(end)));
    first = std::min(first, n - 1);
    last = std::min(last, n - 1);
    for (std::size_t bin = first; bin <= last; ++bin) {
      const double lo = std::max(start, static_cast<double>(bin));
      const double hi = bin == n - 1 ? end : std::min(end, static_cast<double>(bin + 1));
      const double overlap = hi - lo;
      if (overlap > 0.0) {
        sum[bin] += overlap * x;
        mass[bin] += overlap;
      }
    }
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (mass[i] > 0.0)
      out[i] = sum[i] / mass[i];
    else
      out[i] = i > 0 ? out[i - 1] : (sorted_atoms.empty() ? 0.0 : sorted_atoms.front().first);
  }
  return out;
}

EmpiricalDistribution project_quantiles(const EmpiricalDistribution& d, std::size_t n) {
  d.validate();
  std::vector<std::pair<double, double>> pairs(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) pairs[i] = {d.atoms[i], d.weights[i]};
  std::sort(pairs.begin(), pairs.end(),
            [](const auto& x, const auto& y) { return x.first < y.first; });
  return EmpiricalDistribution::uniform(project_sorted(pairs, n));
}

}  // namespace qac
