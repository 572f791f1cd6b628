#include "qac/explore.hpp"

namespace qac {

namespace {
thread_local std::uint64_t g_ucb_calls = 0;
}

void UcbConfig::validate() const {
  require(candidates >= 1, "UcbConfig: L must be >= 1");
  require(n_taus >= 1, "UcbConfig: n_taus must be >= 1");
  require(lambda >= 0.0, "UcbConfig: lambda must be >= 0");
}

UcbStats ucb_score(const QuantileCritic& critic, const Vector& s, const Vector& a, const UcbConfig& cfg, Rng& rng) {
  cfg.validate();
  const Matrix taus = sample_fraction_matrix(1, cfg.n_taus, rng);
  const Matrix z = critic(s.transpose(), a.transpose(), taus);
  const auto [mu, sigma] = mean_std(z.row(0));
  return {mu, sigma};
}

UcbStats ucb_score(const TwinZ& twin, const Vector& s, const Vector& a, const UcbConfig& cfg, Rng& rng) {
  return ucb_score(online_min_critic(twin), s, a, cfg, rng);
}

std::size_t ucb_argmax(std::span<const UcbStats> stats, double lambda) {
  require(!stats.empty(), "ucb_argmax: no candidates");
  std::size_t best = 0;
  double best_score = stats[0].mu + lambda * stats[0].sigma;
  for (std::size_t i = 1; i < stats.size(); ++i) {
    const double score = stats[i].mu + lambda * stats[i].sigma;
    if (score > best_score) {
      best = i;
      best_score = score;
    }
  }
  return best;
}

UcbChoice ucb_select(const GaussianPolicyParams& policy, const QuantileCritic& critic, const Vector& s,
                     const UcbConfig& cfg, Rng& rng) {
  cfg.validate();
  ++g_ucb_calls;
  const Index l = cfg.candidates;
  const Matrix states = s.transpose().replicate(l, 1);
  UcbChoice choice;
  choice.candidates = sample_actions(policy, states, rng).actions;
  const Matrix taus = sample_fraction_matrix(l, cfg.n_taus, rng);
  const Matrix z = critic(states, choice.candidates, taus);
  choice.stats.resize(static_cast<std::size_t>(l));
  for (Index c = 0; c < l; ++c) {
    const auto [mu, sigma] = mean_std(z.row(c));
    choice.stats[static_cast<std::size_t>(c)] = {mu, sigma};
  }
  choice.index = ucb_argmax(choice.stats, cfg.lambda);
  choice.action = choice.candidates.row(static_cast<Index>(choice.index)).transpose();
  return choice;
}

UcbChoice ucb_select(const GaussianPolicyParams& policy, const TwinZ& twin, const Vector& s, const UcbConfig& cfg,
                     Rng& rng) {
  return ucb_select(policy, online_min_critic(twin), s, cfg, rng);
}

std::uint64_t ucb_select_count() { return g_ucb_calls; }

}  // namespace qac
