#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>

namespace fdimon {

// Deterministic random stream. All stochastic code in the project draws from
// one of these; independent streams are derived from a master seed by
// counter-based splitting so that episodes/rollouts can be reproduced (or run
// in parallel) without sharing generator state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Stream `stream` of master seed `master`. Distinct (master, stream) pairs
  // give statistically independent generators.
  static Rng derive(std::uint64_t master, std::uint64_t stream);

  std::uint64_t next_u64();

  double uniform();                       // [0, 1)
  double uniform(double lo, double hi);   // [lo, hi)
  double gaussian();                      // N(0, 1)

  Eigen::VectorXd gaussian_vector(int n);

  // Sample uniformly from an axis-aligned box.
  Eigen::VectorXd uniform_vector(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// SplitMix64 finalizer; used for seed derivation and config hashing.
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace fdimon
