#include "qac/trainer.hpp"

#include "qac/nn/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace qac {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

std::string RunMetrics::to_csv() const {
  std::string out = std::string(kHeader) + "\n";
  for (const auto& r : rows) {
    out += std::to_string(r.timestep);
    for (double v : {r.det_return, r.stoch_return, r.z_std, r.alpha, r.critic_loss, r.policy_loss})
      out += "," + format_number(v);
    out += "\n";
  }
  return out;
}

void RunMetrics::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::ios_base::failure("cannot write " + path.string());
  out << to_csv();
  if (!out) throw std::ios_base::failure("write failed for " + path.string());
}

RunMetrics RunMetrics::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  require(line == kHeader, path.string() + ": unexpected metrics header");
  RunMetrics m;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    require(cells.size() == 7, path.string() + ": metrics row with " + std::to_string(cells.size()) + " cells");
    MetricsRow r;
    r.timestep = std::stoi(cells[0]);
    double* fields[] = {&r.det_return, &r.stoch_return, &r.z_std, &r.alpha, &r.critic_loss, &r.policy_loss};
    for (std::size_t i = 0; i < 6; ++i) *fields[i] = std::stod(cells[i + 1]);
    m.rows.push_back(r);
  }
  return m;
}

Agent make_agent(const TrainConfig& cfg, const EnvSpec& env, Rng& rng) {
  Agent a;
  a.variant = cfg.variant;
  a.policy = make_policy({env.state_dim, env.action_dim, cfg.hidden}, rng);
  a.temp = EntropyTemp::with_alpha(cfg.initial_alpha,
                                   cfg.target_entropy.value_or(-static_cast<double>(env.action_dim)));
  a.policy_opt = nn::make_adam(a.policy, cfg.lr.policy);
  a.alpha_opt = nn::make_adam(a.temp, cfg.lr.alpha);
  if (uses_quantiles(cfg.variant)) {
    a.z = make_twin_z({env.state_dim, env.action_dim, cfg.hidden, cfg.n_cos}, rng);
    a.critic1_opt = nn::make_adam(a.z.online1, cfg.lr.critic);
    a.critic2_opt = nn::make_adam(a.z.online2, cfg.lr.critic);
  } else {
    a.q = make_twin_q(env.state_dim, env.action_dim, cfg.hidden, rng);
    a.critic1_opt = nn::make_adam(a.q.online1, cfg.lr.critic);
    a.critic2_opt = nn::make_adam(a.q.online2, cfg.lr.critic);
  }
  return a;
}

std::pair<double, double> update_agent(Agent& agent, const TrainConfig& cfg, const Batch& batch, Rng& rng) {
  const bool quantile = uses_quantiles(agent.variant);
  PolicyLossResult pl = quantile
                            ? policy_loss(agent.policy, agent.temp, mean_of_z(agent.z, cfg.critic.n, rng), batch.states, rng)
                            : policy_loss(agent.policy, agent.temp, min_of_q(agent.q), batch.states, rng);
  nn::adam_step(agent.policy_opt, agent.policy, pl.grads);

  const double alpha = agent.temp.alpha();
  double critic_loss = 0.0;
  if (quantile) {
    const QuantileCritic target = target_min_critic(agent.z);
    const Matrix y = uses_mtv(agent.variant)
                         ? mtv_target_batch(batch.rewards, batch.dones, batch.next_states, agent.policy, target, alpha,
                                            cfg.critic, rng)
                         : single_sample_target_batch(batch.rewards, batch.dones, batch.next_states, agent.policy,
                                                      target, alpha, cfg.critic, rng);
    TwinLossResult r = twin_quantile_loss(agent.z, batch.states, batch.actions, y, cfg.critic, rng);
    nn::adam_step(agent.critic1_opt, agent.z.online1, r.grads1);
    nn::adam_step(agent.critic2_opt, agent.z.online2, r.grads2);
    ema_update(agent.z, cfg.ema_rate);
    critic_loss = r.loss;
  } else {
    const Matrix y = classic_target_batch(batch.rewards, batch.dones, batch.next_states, agent.policy, agent.q, alpha,
                                          cfg.critic.gamma, rng);
    TwinLossResult r = twin_mse_loss(agent.q, batch.states, batch.actions, y);
    nn::adam_step(agent.critic1_opt, agent.q.online1, r.grads1);
    nn::adam_step(agent.critic2_opt, agent.q.online2, r.grads2);
    ema_update(agent.q, cfg.ema_rate);
    critic_loss = r.loss;
  }

  const std::vector<double> logps(pl.log_probs.data(), pl.log_probs.data() + pl.log_probs.size());
  alpha_step(agent.temp, alpha_loss_gradient(agent.temp, logps), agent.alpha_opt);
  return {critic_loss, pl.loss};
}

double evaluate(const GaussianPolicyParams& policy, const Environment& env, int episodes, EvalMode mode, Rng& rng) {
  require(episodes >= 1, "evaluate: episodes must be >= 1");
  PolicyFn act;
  if (mode == EvalMode::Deterministic)
    act = [&policy](const Vector& s, Rng&) { return deterministic_action(policy, s); };
  else
    act = [&policy](const Vector& s, Rng& r) { return sample_action(policy, s, r).action; };
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) total += rollout(env, act, env.reset(rng), std::nullopt, 1.0, rng).undiscounted;
  return total / episodes;
}

double probe_z_std(const TwinZ& twin, const Batch& probe, const Matrix& taus) {
  const Matrix z = twin_min(twin, probe.states, probe.actions, taus);
  double total = 0.0;
  for (Index r = 0; r < z.rows(); ++r) total += mean_std(z.row(r)).second;
  return total / static_cast<double>(z.rows());
}

double policy_entropy(const GaussianPolicyParams& policy, const Matrix& states, Index samples, Rng& rng) {
  require(samples >= 1 && states.rows() >= 1, "policy_entropy: need states and samples");
  double total = 0.0;
  for (Index i = 0; i < samples; ++i) total -= sample_actions(policy, states, rng).log_probs.sum();
  return total / static_cast<double>(samples * states.rows());
}

TrainResult train(const TrainConfig& cfg) {
  cfg.validate();
  const auto env = make_environment(cfg.env);
  const EnvSpec& spec = env->spec();
  Rng rng = make_rng(cfg.seed, 0);
  Rng init_rng = make_rng(cfg.seed, 1);
  Rng probe_rng = make_rng(cfg.seed, 2);

  const std::uint64_t fractions0 = fraction_draw_count(), ucb0 = ucb_select_count(), mtv0 = mtv_target_count();

  TrainResult result;
  result.agent = make_agent(cfg, spec, init_rng);
  Agent& agent = result.agent;
  ReplayBuffer buffer(cfg.buffer_capacity);
  bool have_probe = false;
  Matrix probe_taus;

  double critic_sum = 0.0, policy_sum = 0.0;
  int loss_count = 0, eval_index = 0;
  auto record = [&](int t) {
    Rng eval_rng = make_rng(cfg.seed, 1000 + static_cast<std::uint64_t>(eval_index++));
    MetricsRow row;
    row.timestep = t;
    row.det_return = evaluate(agent.policy, *env, cfg.eval_episodes, EvalMode::Deterministic, eval_rng);
    row.stoch_return = evaluate(agent.policy, *env, cfg.eval_episodes, EvalMode::Stochastic, eval_rng);
    row.z_std = have_probe && uses_quantiles(cfg.variant) ? probe_z_std(agent.z, result.probe, probe_taus) : kNaN;
    row.alpha = agent.temp.alpha();
    row.critic_loss = loss_count > 0 ? critic_sum / loss_count : kNaN;
    row.policy_loss = loss_count > 0 ? policy_sum / loss_count : kNaN;
    critic_sum = policy_sum = 0.0;
    loss_count = 0;
    result.metrics.rows.push_back(row);
  };

  Vector s = env->reset(rng);
  int episode_t = 0;
  for (int t = 0; t < cfg.max_timesteps; ++t) {
    if (t % cfg.eval_interval == 0) record(t);

    Vector a(spec.action_dim);
    if (t < cfg.warmup) {
      for (Index i = 0; i < a.size(); ++i) a(i) = uniform_open(rng, -1.0, 1.0);
    } else if (uses_ucb(cfg.variant)) {
      a = ucb_select(agent.policy, agent.z, s, cfg.ucb, rng).action;
    } else {
      a = sample_action(agent.policy, s, rng).action;
    }
    StepResult step = env->step(s, a, episode_t, rng);
    buffer.push({s, a, step.reward, step.next_state, step.terminal});
    if (step.done) {
      s = env->reset(rng);
      episode_t = 0;
    } else {
      s = std::move(step.next_state);
      ++episode_t;
    }

    if (!have_probe && t + 1 >= cfg.warmup) {
      result.probe = buffer.sample_batch(static_cast<std::size_t>(cfg.probe_size), probe_rng);
      if (uses_quantiles(cfg.variant)) probe_taus = sample_fraction_matrix(cfg.probe_size, cfg.critic.n, probe_rng);
      have_probe = true;
    }

    if (t >= cfg.warmup) {
      for (int g = 0; g < cfg.gradient_steps; ++g) {
        const Batch batch = buffer.sample_batch(static_cast<std::size_t>(cfg.batch), rng);
        const auto [cl, pl] = update_agent(agent, cfg, batch, rng);
        critic_sum += cl;
        policy_sum += pl;
        ++loss_count;
        ++result.counters.gradient_steps;
      }
    }
  }
  record(cfg.max_timesteps);

  result.counters.fraction_draws = fraction_draw_count() - fractions0;
  result.counters.ucb_calls = ucb_select_count() - ucb0;
  result.counters.mtv_targets = mtv_target_count() - mtv0;
  return result;
}

namespace {

const char* const kParameterFiles[] = {"policy.bin",          "temperature.bin",     "critic_online1.bin",
                                       "critic_online2.bin", "critic_target1.bin", "critic_target2.bin"};

template <typename P>
void save_twin(const std::filesystem::path& dir, const Twin<P>& twin) {
  nn::save_checkpoint(dir / kParameterFiles[2], twin.online1);
  nn::save_checkpoint(dir / kParameterFiles[3], twin.online2);
  nn::save_checkpoint(dir / kParameterFiles[4], twin.target1);
  nn::save_checkpoint(dir / kParameterFiles[5], twin.target2);
}

template <typename P>
void load_twin(const std::filesystem::path& dir, Twin<P>& twin) {
  nn::load_checkpoint(dir / kParameterFiles[2], twin.online1);
  nn::load_checkpoint(dir / kParameterFiles[3], twin.online2);
  nn::load_checkpoint(dir / kParameterFiles[4], twin.target1);
  nn::load_checkpoint(dir / kParameterFiles[5], twin.target2);
}

}  // namespace

void save_agent(const std::filesystem::path& dir, const Agent& agent, const TrainConfig& cfg) {
  std::filesystem::create_directories(dir);
  nn::save_checkpoint(dir / kParameterFiles[0], agent.policy);
  nn::save_checkpoint(dir / kParameterFiles[1], agent.temp);
  if (uses_quantiles(agent.variant))
    save_twin(dir, agent.z);
  else
    save_twin(dir, agent.q);
  json manifest;
  manifest["variant"] = to_string(agent.variant);
  manifest["env"] = cfg.env;
  manifest["state_dim"] = agent.policy.state_dim();
  manifest["action_dim"] = agent.policy.action_dim();
  manifest["hidden"] = cfg.hidden;
  manifest["n_cos"] = cfg.n_cos;
  manifest["gamma"] = cfg.critic.gamma;
  manifest["n_taus"] = cfg.critic.n;
  manifest["seed"] = cfg.seed;
  manifest["target_entropy"] = agent.temp.target_entropy;
  manifest["parameter_sets"] = {{"policy", kParameterFiles[0]},         {"temperature", kParameterFiles[1]},
                                {"critic_online1", kParameterFiles[2]}, {"critic_online2", kParameterFiles[3]},
                                {"critic_target1", kParameterFiles[4]}, {"critic_target2", kParameterFiles[5]}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw std::ios_base::failure("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << "\n";
}

LoadedAgent load_agent(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::ios_base::failure("cannot open " + (dir / "manifest.json").string());
  json doc;
  LoadedAgent out;
  AgentManifest& m = out.manifest;
  try {
    in >> doc;
    m.variant = parse_variant(doc.at("variant").get<std::string>());
    m.env = doc.at("env").get<std::string>();
    m.state_dim = doc.at("state_dim").get<Index>();
    m.action_dim = doc.at("action_dim").get<Index>();
    m.hidden = doc.at("hidden").get<Index>();
    m.n_cos = doc.at("n_cos").get<Index>();
    m.gamma = doc.at("gamma").get<double>();
    m.n_taus = doc.at("n_taus").get<Index>();
    m.seed = doc.at("seed").get<std::uint64_t>();
    out.temp.target_entropy = doc.at("target_entropy").get<double>();
  } catch (const json::exception& e) {
    throw nn::CheckpointError((dir / "manifest.json").string() + ": " + e.what());
  }
  // Shapes come from the manifest; values from the parameter files.
  Rng shape_rng = make_rng(0);
  out.policy = make_policy({m.state_dim, m.action_dim, m.hidden}, shape_rng);
  nn::load_checkpoint(dir / kParameterFiles[0], out.policy);
  nn::load_checkpoint(dir / kParameterFiles[1], out.temp);
  if (uses_quantiles(m.variant)) {
    out.z = make_twin_z({m.state_dim, m.action_dim, m.hidden, m.n_cos}, shape_rng);
    load_twin(dir, out.z);
  } else {
    out.q = make_twin_q(m.state_dim, m.action_dim, m.hidden, shape_rng);
    load_twin(dir, out.q);
  }
  return out;
}

TrainResult train_to_directory(const TrainConfig& cfg, const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  {
    std::ofstream c(out / "config.json");
    if (!c) throw std::ios_base::failure("cannot write " + (out / "config.json").string());
    c << config_to_json(cfg).dump(2) << "\n";
  }
  TrainResult result = train(cfg);
  result.metrics.write_csv(out / "metrics.csv");
  save_agent(out / "checkpoint", result.agent, cfg);
  return result;
}

}  // namespace qac
