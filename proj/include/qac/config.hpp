#pragma once

// Training configuration and its strict JSON form.
//
//   {
//     "variant": "e2dc",              sac | iqn | iqn-mtv | iqn-ucb | e2dc
//     "env": "BimodalGoal",
//     "seed": 0,
//     "max_timesteps": 30000,
//     "warmup": 1000,
//     "batch": 128,
//     "buffer_capacity": 100000,
//     "critic": {"gamma": 0.99, "n": 64, "m": 8, "k": 8, "kappa": 1.0},
//     "ucb": {"candidates": 12, "lambda": 50, "n_taus": 64},
//     "ema_rate": 0.005,
//     "lr": {"critic": 3e-4, "policy": 3e-4, "alpha": 3e-4},
//     "target_entropy": null,        null means -(action dimension)
//     "initial_alpha": 1.0,
//     "eval_interval": 1000,
//     "eval_episodes": 10,
//     "gradient_steps": 1,
//     "hidden": 64,
//     "n_cos": 64,
//     "probe_size": 256
//   }
//
// Every key is optional; absent keys take the variant's defaults. Unknown
// keys are rejected.

#include "qac/explore.hpp"
#include "qac/targets.hpp"

#include <filesystem>
#include <json.hpp>
#include <optional>
#include <stdexcept>
#include <string>

namespace qac {

enum class Variant { Sac, Iqn, IqnMtv, IqnUcb, E2dc };

std::string to_string(Variant v);
/// Throws ConfigError for unknown names.
Variant parse_variant(const std::string& name);
std::vector<Variant> all_variants();

inline bool uses_quantiles(Variant v) { return v != Variant::Sac; }
inline bool uses_mtv(Variant v) { return v == Variant::IqnMtv || v == Variant::E2dc; }
inline bool uses_ucb(Variant v) { return v == Variant::IqnUcb || v == Variant::E2dc; }

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LearningRates {
  double critic = 3e-4;
  double policy = 3e-4;
  double alpha = 3e-4;
};

struct TrainConfig {
  Variant variant = Variant::E2dc;
  std::string env = "BimodalGoal";
  std::uint64_t seed = 0;
  int max_timesteps = 30000;
  int warmup = 1000;
  Index batch = 128;
  std::size_t buffer_capacity = 100000;
  CriticHyper critic;
  UcbConfig ucb;
  double ema_rate = 0.005;
  LearningRates lr;
  std::optional<double> target_entropy;
  double initial_alpha = 1.0;
  int eval_interval = 1000;
  int eval_episodes = 10;
  int gradient_steps = 1;
  Index hidden = 64;
  Index n_cos = 64;
  Index probe_size = 256;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Defaults per variant: M=8, K=8 for the multi-sample variants,
/// M=64, K=1 otherwise; N=64, L=12, lambda=50.
TrainConfig default_config(Variant v);

TrainConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const TrainConfig& cfg);
TrainConfig load_config(const std::filesystem::path& path);

}  // namespace qac
