#include "qac/replay.hpp"

namespace qac {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  require(capacity >= 1, "ReplayBuffer: capacity must be >= 1");
  items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(Transition t) {
  require(t.state.allFinite() && t.action.allFinite() && t.next_state.allFinite() && std::isfinite(t.reward),
          "ReplayBuffer: non-finite transition");
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
  } else {
    items_[cursor_] = std::move(t);
  }
  cursor_ = (cursor_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  require(i < items_.size(), "ReplayBuffer: index out of range");
  return items_.size() < capacity_ ? items_[i] : items_[(cursor_ + i) % capacity_];
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
  require(!items_.empty(), "ReplayBuffer: cannot sample from an empty buffer");
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<std::size_t> out(n);
  for (auto& i : out) i = pick(rng);
  return out;
}

Batch ReplayBuffer::gather(const std::vector<std::size_t>& slots) const {
  require(!slots.empty(), "ReplayBuffer: empty gather");
  const auto& first = items_.at(slots.front());
  const auto n = static_cast<Index>(slots.size());
  Batch b{Matrix(n, first.state.size()), Matrix(n, first.action.size()), Vector(n), Matrix(n, first.state.size()),
          Vector(n)};
  for (Index r = 0; r < n; ++r) {
    const Transition& t = items_.at(slots[static_cast<std::size_t>(r)]);
    b.states.row(r) = t.state.transpose();
    b.actions.row(r) = t.action.transpose();
    b.rewards(r) = t.reward;
    b.next_states.row(r) = t.next_state.transpose();
    b.dones(r) = t.done ? 1.0 : 0.0;
  }
  return b;
}

Batch ReplayBuffer::sample_batch(std::size_t n, Rng& rng) const {
  require(n >= 1, "ReplayBuffer: batch size must be >= 1");
  return gather(sample_indices(n, rng));
}

}  // namespace qac
