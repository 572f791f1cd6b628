#pragma once

// Bounded ring store of transitions with uniform sampling (with replacement).

#include "qac/core.hpp"

#include <vector>

namespace qac {

struct Transition {
  Vector state;
  Vector action;
  double reward = 0.0;
  Vector next_state;
  bool done = false;  // true termination only; horizon cut-offs still bootstrap
};

struct Batch {
  Matrix states;       // B x ds
  Matrix actions;      // B x da
  Vector rewards;      // B
  Matrix next_states;  // B x ds
  Vector dones;        // B, 1 for terminal

  Index size() const { return states.rows(); }
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  /// Overwrites the oldest transition once full.
  void push(Transition t);

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }

  /// Slot i in insertion order among the retained items (0 = oldest).
  const Transition& at(std::size_t i) const;

  /// n slot indices drawn uniformly from the filled slots.
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;
  Batch sample_batch(std::size_t n, Rng& rng) const;

  Batch gather(const std::vector<std::size_t>& slots) const;

 private:
  std::size_t capacity_;
  std::size_t cursor_ = 0;
  std::vector<Transition> items_;
};

}  // namespace qac
