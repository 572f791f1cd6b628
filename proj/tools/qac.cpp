// qac: training, ablations, the EMD study and property checks.
//
// Exit codes: 0 success, 1 usage/config error, 2 property-check failure, 3 I/O error.

#include "qac/checks.hpp"
#include "qac/evalkit.hpp"
#include "qac/nn/checkpoint.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

namespace fs = std::filesystem;
using namespace qac;

namespace {

enum Exit { kOk = 0, kUsage = 1, kPropertyFailure = 2, kIo = 3 };

unsigned worker_count(std::size_t jobs) {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* cap = std::getenv("QAC_THREADS")) {
    const int v = std::atoi(cap);
    if (v >= 1) n = std::min(n, static_cast<unsigned>(v));
  }
  return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(jobs, 1)));
}

void print_row(const MetricsRow& r) {
  std::printf("t=%d det_return=%.4f stoch_return=%.4f z_std=%.4g alpha=%.4g\n", r.timestep, r.det_return,
              r.stoch_return, r.z_std, r.alpha);
}

int cmd_train(const fs::path& config, std::optional<std::uint64_t> seed, const fs::path& out,
              std::optional<int> steps) {
  TrainConfig cfg = load_config(config);
  if (seed) cfg.seed = *seed;
  if (steps) cfg.max_timesteps = std::min(cfg.max_timesteps, *steps);
  cfg.validate();
  const TrainResult r = train_to_directory(cfg, out);
  print_row(r.metrics.rows.back());
  std::printf("wrote %s\n", (out / "metrics.csv").string().c_str());
  return kOk;
}

struct RunOutcome {
  bool ok = false;
  double final_det_return = std::nan("");
  std::string error;
};

int cmd_ablate(const std::string& env, int seeds, const fs::path& out, const std::optional<fs::path>& config,
               std::optional<int> steps) {
  if (seeds < 1) throw ConfigError("--seeds must be >= 1");
  nlohmann::json base = nlohmann::json::object();
  if (config) {
    std::ifstream in(*config);
    if (!in) throw std::ios_base::failure("cannot open config file " + config->string());
    in >> base;
    // Per-variant M and K always come from the variant defaults.
    if (base.contains("critic")) {
      base["critic"].erase("m");
      base["critic"].erase("k");
    }
  }
  const auto variants = all_variants();
  std::vector<TrainConfig> jobs;
  for (Variant v : variants)
    for (int r = 0; r < seeds; ++r) {
      nlohmann::json doc = base;
      doc["variant"] = to_string(v);
      doc["env"] = env;
      doc["seed"] = r;  // run r of every variant shares seed r
      TrainConfig cfg = config_from_json(doc);
      if (steps) cfg.max_timesteps = std::min(cfg.max_timesteps, *steps);
      jobs.push_back(cfg);
    }
  std::vector<RunOutcome> outcomes(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const TrainConfig& cfg = jobs[i];
      const fs::path dir = out / (to_string(cfg.variant) + "_seed" + std::to_string(cfg.seed));
      try {
        const TrainResult r = train_to_directory(cfg, dir);
        outcomes[i] = {true, r.metrics.rows.back().det_return, ""};
      } catch (const std::exception& e) {
        outcomes[i] = {false, std::nan(""), e.what()};
      }
      std::lock_guard lock(log_mutex);
      std::printf("%s seed %llu: %s\n", to_string(cfg.variant).c_str(), static_cast<unsigned long long>(cfg.seed),
                  outcomes[i].ok ? "done" : ("failed: " + outcomes[i].error).c_str());
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < worker_count(jobs.size()); ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::ofstream summary(out / "summary.csv");
  if (!summary) throw std::ios_base::failure("cannot write " + (out / "summary.csv").string());
  summary << "variant,seeds_completed,seeds_requested,mean_det_return,std_det_return,status\n";
  bool any_failed = false;
  std::size_t job = 0;
  for (Variant v : variants) {
    std::vector<double> finals;
    std::string failures;
    for (int r = 0; r < seeds; ++r, ++job) {
      if (outcomes[job].ok)
        finals.push_back(outcomes[job].final_det_return);
      else
        failures += (failures.empty() ? "" : ";") + std::string("seed") + std::to_string(r);
    }
    any_failed = any_failed || !failures.empty();
    char buf[256];
    if (finals.empty()) {
      std::snprintf(buf, sizeof buf, "%s,0,%d,missing,missing,failed:%s\n", to_string(v).c_str(), seeds,
                    failures.c_str());
    } else {
      const auto [mean, sd] = mean_std(std::span<const double>(finals));
      std::snprintf(buf, sizeof buf, "%s,%zu,%d,%.6g,%.6g,%s\n", to_string(v).c_str(), finals.size(), seeds, mean, sd,
                    failures.empty() ? "ok" : ("failed:" + failures).c_str());
    }
    summary << buf;
    std::fputs(buf, stdout);
  }
  return any_failed ? kPropertyFailure : kOk;
}

int cmd_emd(const fs::path& checkpoint, const std::string& env_name, std::uint64_t seed, std::size_t rollouts,
            const std::optional<fs::path>& out) {
  const LoadedAgent agent = load_agent(checkpoint);
  const auto env = make_environment(env_name);
  EmdOptions options;
  options.n_rollouts = rollouts;
  options.n_taus = agent.manifest.n_taus;
  options.gamma = agent.manifest.gamma;
  Rng rng = make_rng(seed, 0);
  const EmdStudy study = emd_study(agent, *env, options, rng);
  const fs::path dir = out.value_or(checkpoint / "emd");
  write_study(dir, study, options, seed, env_name);
  std::printf("emd,avg_return\n%.10g,%.10g\n", study.emd, study.avg_return);
  return std::isfinite(study.emd) && std::isfinite(study.avg_return) ? kOk : kPropertyFailure;
}

int cmd_dp_check(const std::optional<fs::path>& mdp_path, std::uint64_t seed) {
  bool ok = true;
  if (mdp_path) {
    std::ifstream in(*mdp_path);
    if (!in) throw std::ios_base::failure("cannot open MDP file " + mdp_path->string());
    nlohmann::json doc;
    in >> doc;
    const MdpSpec mdp = mdp_from_json(doc);
    const TabularPolicy pi = policy_from_json(doc, mdp);
    const FixedPointResult fp = fixed_point(mdp, pi, 1e-10);
    const Matrix q = policy_evaluation(mdp, pi);
    std::printf("fixed point of %s after %d iterations (gap %.3g)\n", mdp_path->string().c_str(), fp.iterations,
                fp.final_gap);
    for (Index s = 0; s < mdp.n_states; ++s)
      for (Index a = 0; a < mdp.n_actions; ++a) {
        const auto& d = fp.z.at(s, a);
        const double lo = *std::min_element(d.atoms.begin(), d.atoms.end());
        const double hi = *std::max_element(d.atoms.begin(), d.atoms.end());
        std::printf("  Z(%td,%td): mean %.9g  std %.6g  range [%.6g, %.6g]  scalar Q %.9g\n", s, a, d.mean(),
                    std::sqrt(d.variance()), lo, hi, q(s, a));
        if (std::abs(d.mean() - q(s, a)) > 1e-6) ok = false;
      }
    if (mdp.n_states == 1 && mdp.n_actions == 1 && !mdp.terminal[0] && mdp.rewards[0][0].size() == 1)
      std::printf("  closed form r/(1-gamma) = %.9g\n", mdp.rewards[0][0].atoms[0] / (1.0 - mdp.gamma));
  } else {
    const MdpSpec mdp = single_state_mdp(0.5);
    const FixedPointResult fp = fixed_point(mdp, uniform_policy(mdp), 1e-10);
    std::printf("single-state self-loop, r = 1, gamma = 0.5: fixed point mean %.9g (1/(1-gamma) = 2)\n",
                fp.z.at(0, 0).mean());
    if (wasserstein1(fp.z.at(0, 0), EmpiricalDistribution::dirac(2.0)) > 1e-9) ok = false;
  }
  const ContractionReport c = run_contraction_suite(100, seed);
  const bool contraction_ok = c.worst_excess <= 1e-6;
  std::printf("contraction: %d random MDPs, max d(TZ1,TZ2)/d(Z1,Z2) = %.6f (gamma %.2f), max excess over gamma*d = "
              "%.3g  %s\n",
              c.mdps, c.worst_ratio, c.worst_ratio_gamma, c.worst_excess, contraction_ok ? "ok" : "FAILED");
  const MeanConsistencyReport m = run_mean_consistency(20, seed);
  const bool mean_ok = m.max_error <= 1e-6;
  std::printf("mean consistency: %d random MDPs, max |mean Z* - Q| = %.3g  %s\n", m.mdps, m.max_error,
              mean_ok ? "ok" : "FAILED");
  ok = ok && contraction_ok && mean_ok;
  if (!ok) std::printf("property failure: %s\n", !contraction_ok ? "contraction" : (!mean_ok ? "mean consistency" : "fixed point"));
  return ok ? kOk : kPropertyFailure;
}

int cmd_grad_check(std::uint64_t seed, int trials) {
  const GradCheckReport r = run_grad_checks(trials, seed);
  const double tol = 1e-5;
  auto line = [&](const char* name, double err) {
    std::printf("%-22s max relative error %.3e  %s\n", name, err, err < tol ? "ok" : "FAILED");
    return err < tol;
  };
  std::printf("%d random networks\n", r.trials);
  bool ok = line("critic quantile loss", r.mtv);
  ok = line("policy loss", r.policy) && ok;
  ok = line("temperature loss", r.alpha) && ok;
  ok = line("sac critic loss", r.sac_critic) && ok;
  return ok ? kOk : kPropertyFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributional actor-critic lab"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Train one agent from a JSON config");
  fs::path train_config, train_out = "run";
  std::optional<std::uint64_t> train_seed;
  std::optional<int> train_steps;
  train->add_option("--config", train_config, "Config JSON")->required();
  train->add_option("--seed", train_seed, "Override the config seed");
  train->add_option("--out", train_out, "Output directory");
  train->add_option("--steps", train_steps, "Cap max_timesteps");

  auto* ablate = app.add_subcommand("ablate", "Run every variant over paired seeds");
  std::string ablate_env;
  int ablate_seeds = 1;
  fs::path ablate_out = "ablation";
  std::optional<fs::path> ablate_config;
  std::optional<int> ablate_steps;
  ablate->add_option("--env", ablate_env, "Environment name")->required();
  ablate->add_option("--seeds", ablate_seeds, "Seeds per variant")->required();
  ablate->add_option("--out", ablate_out, "Output directory")->required();
  ablate->add_option("--config", ablate_config, "Base config JSON (variant, env, seed, critic.m, critic.k ignored)");
  ablate->add_option("--steps", ablate_steps, "Cap max_timesteps");

  auto* emd = app.add_subcommand("emd", "Distribution-matching study on a checkpoint");
  fs::path emd_checkpoint;
  std::string emd_env;
  std::uint64_t emd_seed = 0;
  std::size_t emd_rollouts = 500;
  std::optional<fs::path> emd_out;
  emd->add_option("--checkpoint", emd_checkpoint, "Checkpoint directory")->required();
  emd->add_option("--env", emd_env, "Environment name")->required();
  emd->add_option("--seed", emd_seed, "Study seed");
  emd->add_option("--rollouts", emd_rollouts, "Monte Carlo rollouts");
  emd->add_option("--out", emd_out, "Output directory (default <checkpoint>/emd)");

  auto* dp = app.add_subcommand("dp-check", "Distributional DP fixed point, contraction and mean checks");
  std::optional<fs::path> dp_mdp;
  std::uint64_t dp_seed = 0;
  dp->add_option("--mdp", dp_mdp, "MDP JSON document");
  dp->add_option("--seed", dp_seed, "Seed for the random MDP suites");

  auto* grad = app.add_subcommand("grad-check", "Finite-difference validation of every loss");
  std::uint64_t grad_seed = 0;
  int grad_trials = 10;
  grad->add_option("--seed", grad_seed, "Seed");
  grad->add_option("--trials", grad_trials, "Random networks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return cmd_train(train_config, train_seed, train_out, train_steps);
    if (*ablate) return cmd_ablate(ablate_env, ablate_seeds, ablate_out, ablate_config, ablate_steps);
    if (*emd) return cmd_emd(emd_checkpoint, emd_env, emd_seed, emd_rollouts, emd_out);
    if (*dp) return cmd_dp_check(dp_mdp, dp_seed);
    if (*grad) return cmd_grad_check(grad_seed, grad_trials);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kUsage;
  } catch (const ContractError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "JSON error: %s\n", e.what());
    return kUsage;
  } catch (const nn::CheckpointError& e) {
    std::fprintf(stderr, "checkpoint error: %s\n", e.what());
    return kIo;
  } catch (const std::ios_base::failure& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kIo;
  } catch (const NonConvergenceError& e) {
    std::fprintf(stderr, "property failure: %s\n", e.what());
    return kPropertyFailure;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  }
  return kUsage;
}
