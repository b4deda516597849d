#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "fdimon/lti.hpp"

namespace fdimon {

// Axis-aligned box region.
struct Box {
  Eigen::VectorXd lo, hi;

  Box() = default;
  Box(Eigen::VectorXd lo_, Eigen::VectorXd hi_);

  int dim() const { return static_cast<int>(lo.size()); }
  bool contains(const Eigen::VectorXd& x) const;
  Box scaled(double depth) const;  // depth * box, depth in (0, 1]
  Eigen::VectorXd sample_uniform(Rng& rng) const;
};

// A concrete trajectory that leaves the region at the final step.
struct Counterexample {
  Eigen::VectorXd x0;
  std::vector<Eigen::VectorXd> w_seq;  // process noise, one per step
  std::vector<Eigen::VectorXd> v_seq;  // measurement noise, one per step
  int coord = 0;                       // which coordinate of x_i violates
  double violation = 0.0;              // distance outside the bound
};

struct InvarianceCertificate {
  Box region;
  int steps = 0;
  double noise_bound_sigmas = 0.0;
  bool verified = false;
  std::optional<Counterexample> counterexample;
};

// Checks whether the nominal closed loop (zero attack, x_hat_0 = 0) maps the
// region into itself after exactly `steps` steps, for every initial state in
// the region and every noise sequence in the truncated hypercube
// |w_j[d]| <= sigma_mult * sqrt(Sigma_w[d,d]) (likewise v). Because x_i is an
// affine function of (x0, noise), coordinate extremes are attained at
// sign-matched corners, so the check is exact for the truncated noise model:
// verified == true iff no such trajectory ends outside, and a failing check
// returns a concrete worst-case trajectory.
InvarianceCertificate is_invariant(const SystemModel& model, const Box& region, int steps,
                                   double sigma_mult);

// Algorithm: evaluate depth in {d_delta, 2 d_delta, ..., 1} ascending and
// return depth * X_S for the first depth that passes is_invariant.
// Throws SynthesisError if no depth <= 1 is invariant.
Box get_performance_region(const SystemModel& model, const Box& X_S, int steps,
                           double d_delta, double sigma_mult);

// Replays a counterexample through lti step() with zero attack and the
// recorded noise; returns the state after `steps` steps.
Eigen::VectorXd replay_counterexample(const SystemModel& model, const Counterexample& cx,
                                      int steps);

}  // namespace fdimon
