#pragma once

// Toy continuous-control environments. Actions live in the open box (-1, 1)^d.
// Environments are immutable; episode state (position, step index) is passed
// in by the caller, so any number of rollouts can share one instance.
//
//  BimodalGoal      1-D walk. x' = clamp(x + 0.2a + eps, -1.5, 1.5), eps ~ N(0, 0.05^2).
//                   x' >= 1 ends with +1, x' <= -1 ends with +0.55, otherwise -0.01.
//                   Horizon 40, start at x = 0.
//  StochasticChain  Cells 0..7, observed as cell/7. The agent moves right when
//                   a + eps > 0.25 (eps ~ N(0, 0.1^2)), otherwise drifts left
//                   (floored at 0). Reaching cell 7 ends with +5; all other
//                   rewards are 0. Horizon 20, start at cell 0.
//  NoisyMass        2-D point p' = clamp(p + 0.1a + eps, -2, 2), eps ~ N(0, 0.02^2 I),
//                   reward -0.05 |p'|^2 - 0.25 |a|^2, no terminal state. Horizon 50,
//                   p0 ~ U(-1, 1)^2.

#include "qac/distmath.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>

namespace qac {

struct EnvSpec {
  std::string name;
  Index state_dim = 1;
  Index action_dim = 1;
  int horizon = 1;
};

struct StepResult {
  Vector next_state;
  double reward = 0.0;
  bool done = false;      // terminal or horizon reached
  bool terminal = false;  // true environment termination (no bootstrap)
};

class Environment {
 public:
  virtual ~Environment() = default;

  virtual const EnvSpec& spec() const = 0;
  virtual Vector reset(Rng& rng) const = 0;

  /// Step `t` (0-based) of an episode. Throws ContractError for actions
  /// outside (-1, 1)^d; done is forced once t + 1 reaches the horizon.
  StepResult step(const Vector& state, const Vector& action, int t, Rng& rng) const;

  /// Dynamics with the noise supplied explicitly (noise_dim() standard normals).
  virtual StepResult transition(const Vector& state, const Vector& action, const Vector& noise) const = 0;
  virtual Index noise_dim() const = 0;

  void check_action(const Vector& action) const;
};

class BimodalGoal final : public Environment {
 public:
  static constexpr double kStep = 0.2;
  static constexpr double kNoise = 0.05;
  static constexpr double kRightReward = 1.0;
  static constexpr double kLeftReward = 0.55;
  static constexpr double kStepReward = -0.01;

  const EnvSpec& spec() const override { return spec_; }
  Vector reset(Rng& rng) const override;
  StepResult transition(const Vector& state, const Vector& action, const Vector& noise) const override;
  Index noise_dim() const override { return 1; }

 private:
  EnvSpec spec_{"BimodalGoal", 1, 1, 40};
};

class StochasticChain final : public Environment {
 public:
  static constexpr int kCells = 8;
  static constexpr double kThreshold = 0.25;
  static constexpr double kNoise = 0.1;
  static constexpr double kGoalReward = 5.0;

  const EnvSpec& spec() const override { return spec_; }
  Vector reset(Rng& rng) const override;
  StepResult transition(const Vector& state, const Vector& action, const Vector& noise) const override;
  Index noise_dim() const override { return 1; }

  static int cell(const Vector& state);

 private:
  EnvSpec spec_{"StochasticChain", 1, 1, 20};
};

class NoisyMass final : public Environment {
 public:
  static constexpr double kStep = 0.1;
  static constexpr double kNoise = 0.02;
  static constexpr double kCost = 0.05;
  static constexpr double kActionCost = 0.25;
  static constexpr double kBound = 2.0;

  const EnvSpec& spec() const override { return spec_; }
  Vector reset(Rng& rng) const override;
  StepResult transition(const Vector& state, const Vector& action, const Vector& noise) const override;
  Index noise_dim() const override { return 2; }

  /// Expected undiscounted return of the zero-action policy from p0 ~ U(-1,1)^2,
  /// ignoring the (negligible) position clamp.
  static double zero_policy_expected_return(int horizon);

 private:
  EnvSpec spec_{"NoisyMass", 2, 2, 50};
};

/// Throws ContractError naming the unknown environment.
std::unique_ptr<Environment> make_environment(const std::string& name);
std::vector<std::string> environment_names();

/// Stochastic or deterministic state -> action map.
using PolicyFn = std::function<Vector(const Vector& state, Rng& rng)>;

struct RolloutResult {
  double undiscounted = 0.0;
  double discounted = 0.0;
  int steps = 0;
};

/// Runs one episode from `s0`. When `first_action` is set it replaces the
/// policy's choice at step 0.
RolloutResult rollout(const Environment& env, const PolicyFn& policy, const Vector& s0,
                      const std::optional<Vector>& first_action, double gamma, Rng& rng);

/// Empirical distribution (uniform weights) of discounted returns from
/// (s0, a0) over n_rollouts independent rollouts.
EmpiricalDistribution return_distribution_oracle(const Environment& env, const PolicyFn& policy, const Vector& s0,
                                                 const Vector& a0, std::size_t n_rollouts, double gamma, Rng& rng);

}  // namespace qac
