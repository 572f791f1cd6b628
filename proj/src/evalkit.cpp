#include "qac/evalkit.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace qac {

EmpiricalDistribution znet_distribution(const TwinZ& twin, const Vector& s, const Vector& a, Index n_taus, Rng& rng) {
  require(n_taus >= 1, "znet_distribution: n_taus must be >= 1");
  const Matrix taus = sample_fraction_matrix(1, n_taus, rng);
  const Matrix z = twin_min(twin, s.transpose(), a.transpose(), taus);
  return EmpiricalDistribution::uniform({z.data(), z.data() + z.size()});
}

EmdStudy emd_study(const GaussianPolicyParams& policy, const TwinZ& twin, const Environment& env,
                   const EmdOptions& options, Rng& rng) {
  require(options.n_rollouts >= 1, "emd_study: n_rollouts must be >= 1");
  EmdStudy study;
  study.s0 = env.reset(rng);
  study.a0 = sample_action(policy, study.s0, rng).action;
  const PolicyFn act = [&policy](const Vector& s, Rng& r) { return sample_action(policy, s, r).action; };
  study.oracle = return_distribution_oracle(env, act, study.s0, study.a0, options.n_rollouts, options.gamma, rng);
  study.znet = znet_distribution(twin, study.s0, study.a0, options.n_taus, rng);
  study.emd = wasserstein1(study.oracle, study.znet);
  study.avg_return = evaluate(policy, env, options.return_episodes, EvalMode::Stochastic, rng);
  return study;
}

EmdStudy emd_study(const LoadedAgent& agent, const Environment& env, const EmdOptions& options, Rng& rng) {
  require(uses_quantiles(agent.manifest.variant), "emd_study: checkpoint has no quantile critic (variant sac)");
  return emd_study(agent.policy, agent.z, env, options, rng);
}

std::vector<HistogramBin> histogram(const EmpiricalDistribution& d, std::size_t n_bins) {
  require(n_bins >= 1, "histogram: n_bins must be >= 1");
  d.validate();
  const auto [lo_it, hi_it] = std::minmax_element(d.atoms.begin(), d.atoms.end());
  const double lo = *lo_it, hi = *hi_it;
  if (hi <= lo) return {{lo, hi, 1.0}};
  std::vector<HistogramBin> bins(n_bins);
  const double width = (hi - lo) / static_cast<double>(n_bins);
  for (std::size_t i = 0; i < n_bins; ++i) {
    bins[i].lo = lo + width * static_cast<double>(i);
    bins[i].hi = i + 1 == n_bins ? hi : lo + width * static_cast<double>(i + 1);
  }
  double total = 0.0;
  for (double w : d.weights) total += w;
  for (std::size_t i = 0; i < d.size(); ++i) {
    auto b = static_cast<std::size_t>((d.atoms[i] - lo) / width);
    bins[std::min(b, n_bins - 1)].mass += d.weights[i] / total;
  }
  return bins;
}

void export_histogram(const EmpiricalDistribution& d, std::size_t n_bins, const std::filesystem::path& path) {
  const auto bins = histogram(d, n_bins);
  std::ofstream out(path);
  if (!out) throw std::ios_base::failure("cannot write " + path.string());
  out << "bin_lo,bin_hi,mass\n";
  char buf[96];
  for (const auto& b : bins) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", b.lo, b.hi, b.mass);
    out << buf;
  }
  if (!out) throw std::ios_base::failure("write failed for " + path.string());
}

std::vector<HistogramBin> read_histogram(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  require(line == "bin_lo,bin_hi,mass", path.string() + ": unexpected histogram header");
  std::vector<HistogramBin> bins;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    HistogramBin b;
    char comma1 = 0, comma2 = 0;
    std::istringstream ss(line);
    ss >> b.lo >> comma1 >> b.hi >> comma2 >> b.mass;
    require(!ss.fail() && comma1 == ',' && comma2 == ',', path.string() + ": malformed row '" + line + "'");
    bins.push_back(b);
  }
  return bins;
}

void export_atoms(const EmpiricalDistribution& d, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::ios_base::failure("cannot write " + path.string());
  out << "atom,weight\n";
  char buf[64];
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", d.atoms[i], d.weights[i]);
    out << buf;
  }
}

void write_study(const std::filesystem::path& out, const EmdStudy& study, const EmdOptions& options,
                 std::uint64_t seed, const std::string& env_name, std::size_t n_bins) {
  std::filesystem::create_directories(out);
  nlohmann::json manifest;
  manifest["seed"] = seed;
  manifest["env"] = env_name;
  manifest["s0"] = std::vector<double>(study.s0.data(), study.s0.data() + study.s0.size());
  manifest["a0"] = std::vector<double>(study.a0.data(), study.a0.data() + study.a0.size());
  manifest["gamma"] = options.gamma;
  manifest["n_rollouts"] = options.n_rollouts;
  manifest["n_taus"] = options.n_taus;
  manifest["return_episodes"] = options.return_episodes;
  manifest["n_bins"] = n_bins;
  {
    std::ofstream m(out / "manifest.json");
    if (!m) throw std::ios_base::failure("cannot write " + (out / "manifest.json").string());
    m << manifest.dump(2) << "\n";
  }
  export_histogram(study.oracle, n_bins, out / "oracle_hist.csv");
  export_histogram(study.znet, n_bins, out / "znet_hist.csv");
  export_atoms(study.oracle, out / "oracle_atoms.csv");
  export_atoms(study.znet, out / "znet_atoms.csv");
  std::ofstream s(out / "summary.csv");
  if (!s) throw std::ios_base::failure("cannot write " + (out / "summary.csv").string());
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.10g,%.10g\n", study.emd, study.avg_return);
  s << "emd,avg_return\n" << buf;
}

}  // namespace qac
