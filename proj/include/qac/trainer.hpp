#pragma once

// The full training loop for every variant, metrics, evaluation and agent
// checkpoints.
//
// Per environment step: warmup actions are uniform on (-1, 1)^d, afterwards
// either UCB selection or a plain policy sample. Per gradient step, in order:
// policy update (Q = mean of Z, or the scalar twin for sac), critic update
// against the variant's targets, EMA of the targets, temperature update.

#include "qac/config.hpp"
#include "qac/envs.hpp"
#include "qac/replay.hpp"

#include <filesystem>
#include <optional>

namespace qac {

struct MetricsRow {
  int timestep = 0;
  double det_return = 0.0;
  double stoch_return = 0.0;
  double z_std = 0.0;  // NaN until the probe exists, and always for sac
  double alpha = 0.0;
  double critic_loss = 0.0;  // mean over gradient steps since the previous row
  double policy_loss = 0.0;
};

struct RunMetrics {
  std::vector<MetricsRow> rows;

  static constexpr const char* kHeader = "timestep,det_return,stoch_return,z_std,alpha,critic_loss,policy_loss";

  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
  static RunMetrics read_csv(const std::filesystem::path& path);
};

/// Parameters and optimizer state of one learning agent.
struct Agent {
  Variant variant = Variant::E2dc;
  GaussianPolicyParams policy;
  EntropyTemp temp;
  TwinZ z;  // quantile variants
  TwinQ q;  // sac
  nn::AdamState policy_opt;
  nn::AdamState alpha_opt;
  nn::AdamState critic1_opt;
  nn::AdamState critic2_opt;
};

Agent make_agent(const TrainConfig& cfg, const EnvSpec& env, Rng& rng);

/// Instrumentation deltas over one run.
struct RunCounters {
  std::uint64_t fraction_draws = 0;
  std::uint64_t ucb_calls = 0;
  std::uint64_t mtv_targets = 0;
  std::uint64_t gradient_steps = 0;
};

struct TrainResult {
  RunMetrics metrics;
  Agent agent;
  RunCounters counters;
  Batch probe;  // empty when training ended before the probe was drawn
};

/// One gradient step on `batch`. Returns (critic loss, policy loss).
std::pair<double, double> update_agent(Agent& agent, const TrainConfig& cfg, const Batch& batch, Rng& rng);

/// Runs the whole loop. Deterministic given the config (including seed).
TrainResult train(const TrainConfig& cfg);

enum class EvalMode { Deterministic, Stochastic };

/// Mean undiscounted return over `episodes` episodes.
double evaluate(const GaussianPolicyParams& policy, const Environment& env, int episodes, EvalMode mode, Rng& rng);

/// Mean over probe rows of the std of twin-min quantile values at fixed fractions.
double probe_z_std(const TwinZ& twin, const Batch& probe, const Matrix& taus);

/// Monte Carlo entropy estimate -E[log pi(a|s)] over `states`, `samples` draws each.
double policy_entropy(const GaussianPolicyParams& policy, const Matrix& states, Index samples, Rng& rng);

// Checkpoints: one nnkit file per parameter set plus manifest.json.

struct AgentManifest {
  Variant variant = Variant::E2dc;
  std::string env;
  Index state_dim = 0;
  Index action_dim = 0;
  Index hidden = 0;
  Index n_cos = 0;
  double gamma = 0.99;
  Index n_taus = 64;
  std::uint64_t seed = 0;
};

void save_agent(const std::filesystem::path& dir, const Agent& agent, const TrainConfig& cfg);

struct LoadedAgent {
  AgentManifest manifest;
  GaussianPolicyParams policy;
  EntropyTemp temp;
  TwinZ z;
  TwinQ q;
};

LoadedAgent load_agent(const std::filesystem::path& dir);

/// Writes metrics.csv, config.json and checkpoint/ into `out`.
TrainResult train_to_directory(const TrainConfig& cfg, const std::filesystem::path& out);

}  // namespace qac
