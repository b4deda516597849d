#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "fdimon/rng.hpp"

namespace fdimon {

struct Transition {
  Eigen::VectorXd obs;
  Eigen::VectorXd action;
  double reward = 0.0;
  Eigen::VectorXd next_obs;
  bool done = false;
};

// Fixed-capacity ring of transitions with uniform without-replacement batch
// sampling. Single writer; see the concurrency notes in the env module.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return ring_[i]; }

  // `batch` distinct indices sampled uniformly (Floyd's algorithm).
  std::vector<const Transition*> sample(std::size_t batch, Rng& rng) const;

  void clear();

 private:
  std::size_t capacity_;
  std::size_t size_ = 0;
  std::size_t head_ = 0;  // next slot to overwrite
  std::vector<Transition> ring_;
};

}  // namespace fdimon
