#include "qac/envs.hpp"

#include <algorithm>
#include <cmath>

namespace qac {

void Environment::check_action(const Vector& action) const {
  if (action.size() != spec().action_dim)
    throw ContractError(spec().name + ": action has " + std::to_string(action.size()) + " components, expected " +
                        std::to_string(spec().action_dim));
  for (Index i = 0; i < action.size(); ++i)
    if (!std::isfinite(action(i)) || action(i) <= -1.0 || action(i) >= 1.0)
      throw ContractError(spec().name + ": action component " + std::to_string(i) + " = " +
                          std::to_string(action(i)) + " lies outside (-1, 1)");
}

StepResult Environment::step(const Vector& state, const Vector& action, int t, Rng& rng) const {
  check_action(action);
  require(t >= 0 && t < spec().horizon, spec().name + ": step index outside the horizon");
  Vector noise(noise_dim());
  for (Index i = 0; i < noise.size(); ++i) noise(i) = standard_normal(rng);
  StepResult r = transition(state, action, noise);
  r.done = r.terminal || t + 1 >= spec().horizon;
  return r;
}

// BimodalGoal

Vector BimodalGoal::reset(Rng&) const { return Vector::Zero(1); }

StepResult BimodalGoal::transition(const Vector& state, const Vector& action, const Vector& noise) const {
  const double x = std::clamp(state(0) + kStep * action(0) + kNoise * noise(0), -1.5, 1.5);
  StepResult r;
  r.next_state = Vector::Constant(1, x);
  if (x >= 1.0) {
    r.reward = kRightReward;
    r.terminal = true;
  } else if (x <= -1.0) {
    r.reward = kLeftReward;
    r.terminal = true;
  } else {
    r.reward = kStepReward;
  }
  r.done = r.terminal;
  return r;
}

// StochasticChain

Vector StochasticChain::reset(Rng&) const { return Vector::Zero(1); }

int StochasticChain::cell(const Vector& state) {
  return static_cast<int>(std::lround(state(0) * (kCells - 1)));
}

StepResult StochasticChain::transition(const Vector& state, const Vector& action, const Vector& noise) const {
  int c = cell(state);
  c = action(0) + kNoise * noise(0) > kThreshold ? c + 1 : std::max(0, c - 1);
  StepResult r;
  r.next_state = Vector::Constant(1, static_cast<double>(c) / (kCells - 1));
  r.terminal = c == kCells - 1;
  r.reward = r.terminal ? kGoalReward : 0.0;
  r.done = r.terminal;
  return r;
}

// NoisyMass

Vector NoisyMass::reset(Rng& rng) const {
  Vector p(2);
  p(0) = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
  p(1) = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
  return p;
}

StepResult NoisyMass::transition(const Vector& state, const Vector& action, const Vector& noise) const {
  StepResult r;
  r.next_state = (state + kStep * action + kNoise * noise).cwiseMax(-kBound).cwiseMin(kBound);
  r.reward = -kCost * r.next_state.squaredNorm() - kActionCost * action.squaredNorm();
  return r;
}

double NoisyMass::zero_policy_expected_return(int horizon) {
  // E|p_t|^2 = 2/3 (uniform start, two axes) + 2 t sigma^2.
  double total = 0.0;
  for (int t = 1; t <= horizon; ++t) total += 2.0 / 3.0 + 2.0 * t * kNoise * kNoise;
  return -kCost * total;
}

std::unique_ptr<Environment> make_environment(const std::string& name) {
  if (name == "BimodalGoal") return std::make_unique<BimodalGoal>();
  if (name == "StochasticChain") return std::make_unique<StochasticChain>();
  if (name == "NoisyMass") return std::make_unique<NoisyMass>();
  throw ContractError("unknown environment '" + name + "'");
}

std::vector<std::string> environment_names() { return {"BimodalGoal", "StochasticChain", "NoisyMass"}; }

RolloutResult rollout(const Environment& env, const PolicyFn& policy, const Vector& s0,
                      const std::optional<Vector>& first_action, double gamma, Rng& rng) {
  RolloutResult out;
  Vector s = s0;
  double discount = 1.0;
  for (int t = 0; t < env.spec().horizon; ++t) {
    const Vector a = (t == 0 && first_action) ? *first_action : policy(s, rng);
    StepResult r = env.step(s, a, t, rng);
    out.undiscounted += r.reward;
    out.discounted += discount * r.reward;
    discount *= gamma;
    ++out.steps;
    if (r.done) break;
    s = std::move(r.next_state);
  }
  return out;
}

EmpiricalDistribution return_distribution_oracle(const Environment& env, const PolicyFn& policy, const Vector& s0,
                                                 const Vector& a0, std::size_t n_rollouts, double gamma, Rng& rng) {
  require(n_rollouts >= 1, "return_distribution_oracle: n_rollouts must be >= 1");
  std::vector<double> returns(n_rollouts);
  for (double& g : returns) g = rollout(env, policy, s0, a0, gamma, rng).discounted;
  return EmpiricalDistribution::uniform(std::move(returns));
}

}  // namespace qac
