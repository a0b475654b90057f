#pragma once

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "persearch/geometry.hpp"
#include "persearch/rng.hpp"

namespace persearch {

// One (S, A, R, S') record with the terminal flag.
struct Transition {
  std::vector<double> state;
  Action action = Action::kTerminate;
  double reward = 0.0;
  std::vector<double> next_state;
  bool done = false;
};

// Fixed-capacity FIFO store with uniform sampling (with replacement).
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0)
      throw std::invalid_argument("replay capacity must be positive");
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t total_pushed() const { return total_; }

  void push(Transition t) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(t));
    } else {
      items_[head_] = std::move(t);
      head_ = (head_ + 1) % capacity_;
    }
    ++total_;
  }

  // i-th oldest element, i in [0, size).
  const Transition& oldest(std::size_t i) const {
    if (i >= items_.size()) throw std::out_of_range("replay index out of range");
    return items_[(head_ + i) % items_.size()];
  }

  std::vector<Transition> sample(std::size_t k, Rng& rng) const {
    if (items_.empty())
      throw std::runtime_error("cannot sample from an empty replay buffer");
    std::vector<Transition> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i)
      out.push_back(items_[static_cast<std::size_t>(rng.uniform_int(items_.size()))]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // oldest slot once the buffer is full
  std::uint64_t total_ = 0;
  std::vector<Transition> items_;
};

}  // namespace persearch
