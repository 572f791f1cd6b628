#include "qac/config.hpp"

#include "qac/envs.hpp"

#include <fstream>
#include <set>

namespace qac {

using nlohmann::json;

namespace {

const std::pair<Variant, const char*> kVariantNames[] = {
    {Variant::Sac, "sac"}, {Variant::Iqn, "iqn"}, {Variant::IqnMtv, "iqn-mtv"},
    {Variant::IqnUcb, "iqn-ucb"}, {Variant::E2dc, "e2dc"}};

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, value] : obj.items())
    if (!known.contains(key)) throw ConfigError("unknown config key '" + where + key + "'");
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + where + key + "' has the wrong type");
  }
}

}  // namespace

std::string to_string(Variant v) {
  for (const auto& [variant, name] : kVariantNames)
    if (variant == v) return name;
  return "?";
}

Variant parse_variant(const std::string& name) {
  for (const auto& [variant, n] : kVariantNames)
    if (name == n) return variant;
  throw ConfigError("unknown variant '" + name + "' (expected sac, iqn, iqn-mtv, iqn-ucb or e2dc)");
}

std::vector<Variant> all_variants() {
  return {Variant::Sac, Variant::Iqn, Variant::IqnMtv, Variant::IqnUcb, Variant::E2dc};
}

TrainConfig default_config(Variant v) {
  TrainConfig cfg;
  cfg.variant = v;
  if (uses_mtv(v)) {
    cfg.critic.m = 8;
    cfg.critic.k = 8;
  } else {
    cfg.critic.m = 64;
    cfg.critic.k = 1;
  }
  return cfg;
}

void TrainConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  bool known_env = false;
  for (const auto& name : environment_names()) known_env = known_env || name == env;
  check(known_env, "env: unknown environment '" + env + "'");
  check(max_timesteps >= 1, "max_timesteps: must be >= 1");
  check(warmup >= 0, "warmup: must be >= 0");
  check(batch >= 1, "batch: must be >= 1");
  check(buffer_capacity >= 1, "buffer_capacity: must be >= 1");
  check(critic.gamma >= 0.0 && critic.gamma < 1.0, "critic.gamma: must lie in [0, 1)");
  check(critic.n >= 1, "critic.n: must be >= 1");
  check(critic.m >= 1, "critic.m: must be >= 1");
  check(critic.k >= 1, "critic.k: must be >= 1");
  check(critic.kappa > 0.0, "critic.kappa: must be > 0");
  check(ucb.candidates >= 1, "ucb.candidates: must be >= 1");
  check(ucb.lambda >= 0.0, "ucb.lambda: must be >= 0");
  check(ucb.n_taus >= 1, "ucb.n_taus: must be >= 1");
  check(ema_rate > 0.0 && ema_rate < 1.0, "ema_rate: must lie in (0, 1)");
  check(lr.critic > 0.0, "lr.critic: must be > 0");
  check(lr.policy > 0.0, "lr.policy: must be > 0");
  check(lr.alpha > 0.0, "lr.alpha: must be > 0");
  check(initial_alpha > 0.0, "initial_alpha: must be > 0");
  check(eval_interval >= 1, "eval_interval: must be >= 1");
  check(eval_episodes >= 1, "eval_episodes: must be >= 1");
  check(gradient_steps >= 0, "gradient_steps: must be >= 0");
  check(hidden >= 1, "hidden: must be >= 1");
  check(n_cos >= 1, "n_cos: must be >= 1");
  check(probe_size >= 1, "probe_size: must be >= 1");
  if (variant == Variant::Iqn || variant == Variant::IqnUcb)
    check(critic.k == 1, "critic.k: variant " + to_string(variant) + " requires k = 1");
}

TrainConfig config_from_json(const json& doc) {
  reject_unknown(doc,
                 {"variant", "env", "seed", "max_timesteps", "warmup", "batch", "buffer_capacity", "critic", "ucb",
                  "ema_rate", "lr", "target_entropy", "initial_alpha", "eval_interval", "eval_episodes",
                  "gradient_steps", "hidden", "n_cos", "probe_size"},
                 "");
  std::string variant = "e2dc";
  read(doc, "variant", variant, "");
  TrainConfig cfg = default_config(parse_variant(variant));
  read(doc, "env", cfg.env, "");
  read(doc, "seed", cfg.seed, "");
  read(doc, "max_timesteps", cfg.max_timesteps, "");
  read(doc, "warmup", cfg.warmup, "");
  read(doc, "batch", cfg.batch, "");
  read(doc, "buffer_capacity", cfg.buffer_capacity, "");
  if (doc.contains("critic")) {
    const json& c = doc.at("critic");
    reject_unknown(c, {"gamma", "n", "m", "k", "kappa"}, "critic.");
    read(c, "gamma", cfg.critic.gamma, "critic.");
    read(c, "n", cfg.critic.n, "critic.");
    read(c, "m", cfg.critic.m, "critic.");
    read(c, "k", cfg.critic.k, "critic.");
    read(c, "kappa", cfg.critic.kappa, "critic.");
  }
  if (doc.contains("ucb")) {
    const json& u = doc.at("ucb");
    reject_unknown(u, {"candidates", "lambda", "n_taus"}, "ucb.");
    read(u, "candidates", cfg.ucb.candidates, "ucb.");
    read(u, "lambda", cfg.ucb.lambda, "ucb.");
    read(u, "n_taus", cfg.ucb.n_taus, "ucb.");
  }
  read(doc, "ema_rate", cfg.ema_rate, "");
  if (doc.contains("lr")) {
    const json& l = doc.at("lr");
    reject_unknown(l, {"critic", "policy", "alpha"}, "lr.");
    read(l, "critic", cfg.lr.critic, "lr.");
    read(l, "policy", cfg.lr.policy, "lr.");
    read(l, "alpha", cfg.lr.alpha, "lr.");
  }
  if (doc.contains("target_entropy") && !doc.at("target_entropy").is_null()) {
    double h = 0.0;
    read(doc, "target_entropy", h, "");
    cfg.target_entropy = h;
  }
  read(doc, "initial_alpha", cfg.initial_alpha, "");
  read(doc, "eval_interval", cfg.eval_interval, "");
  read(doc, "eval_episodes", cfg.eval_episodes, "");
  read(doc, "gradient_steps", cfg.gradient_steps, "");
  read(doc, "hidden", cfg.hidden, "");
  read(doc, "n_cos", cfg.n_cos, "");
  read(doc, "probe_size", cfg.probe_size, "");
  cfg.validate();
  return cfg;
}

json config_to_json(const TrainConfig& cfg) {
  json doc;
  doc["variant"] = to_string(cfg.variant);
  doc["env"] = cfg.env;
  doc["seed"] = cfg.seed;
  doc["max_timesteps"] = cfg.max_timesteps;
  doc["warmup"] = cfg.warmup;
  doc["batch"] = cfg.batch;
  doc["buffer_capacity"] = cfg.buffer_capacity;
  doc["critic"] = {{"gamma", cfg.critic.gamma}, {"n", cfg.critic.n}, {"m", cfg.critic.m}, {"k", cfg.critic.k},
                   {"kappa", cfg.critic.kappa}};
  doc["ucb"] = {{"candidates", cfg.ucb.candidates}, {"lambda", cfg.ucb.lambda}, {"n_taus", cfg.ucb.n_taus}};
  doc["ema_rate"] = cfg.ema_rate;
  doc["lr"] = {{"critic", cfg.lr.critic}, {"policy", cfg.lr.policy}, {"alpha", cfg.lr.alpha}};
  doc["target_entropy"] = cfg.target_entropy ? json(*cfg.target_entropy) : json(nullptr);
  doc["initial_alpha"] = cfg.initial_alpha;
  doc["eval_interval"] = cfg.eval_interval;
  doc["eval_episodes"] = cfg.eval_episodes;
  doc["gradient_steps"] = cfg.gradient_steps;
  doc["hidden"] = cfg.hidden;
  doc["n_cos"] = cfg.n_cos;
  doc["probe_size"] = cfg.probe_size;
  return doc;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open config file " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(doc);
}

}  // namespace qac
