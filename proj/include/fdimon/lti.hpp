#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <vector>

#include "fdimon/rng.hpp"

namespace fdimon {

// Discrete LTI plant + fixed-gain observer + state-feedback controller.
// Immutable after construction; safe to share across threads.
struct SystemModel {
  Eigen::MatrixXd A, B, C, D;
  Eigen::MatrixXd K;            // controller gain, u = -K x_hat
  Eigen::MatrixXd L;            // observer gain
  Eigen::MatrixXd Sigma_w;      // process noise covariance (PSD)
  Eigen::MatrixXd Sigma_v;      // measurement noise covariance (PSD)
  Eigen::VectorXd x0_mean;
  Eigen::MatrixXd Sigma_0;      // initial state covariance (PSD)
  double h = 0.1;               // sampling period [s]

  // PSD square roots for noise sampling, filled at construction.
  Eigen::MatrixXd sqrt_w, sqrt_v, sqrt_0;

  SystemModel(Eigen::MatrixXd A, Eigen::MatrixXd B, Eigen::MatrixXd C, Eigen::MatrixXd D,
              Eigen::MatrixXd K, Eigen::MatrixXd L, Eigen::MatrixXd Sigma_w,
              Eigen::MatrixXd Sigma_v, Eigen::VectorXd x0_mean, Eigen::MatrixXd Sigma_0,
              double h);

  // Same validation except the closed-loop spectral radius gate; lets tests
  // build deliberately non-stabilized loops (e.g. open-loop drift with K = 0).
  static SystemModel unchecked(Eigen::MatrixXd A, Eigen::MatrixXd B, Eigen::MatrixXd C,
                               Eigen::MatrixXd D, Eigen::MatrixXd K, Eigen::MatrixXd L,
                               Eigen::MatrixXd Sigma_w, Eigen::MatrixXd Sigma_v,
                               Eigen::VectorXd x0_mean, Eigen::MatrixXd Sigma_0, double h);

  int state_dim() const { return static_cast<int>(A.rows()); }
  int output_dim() const { return static_cast<int>(C.rows()); }
  int input_dim() const { return static_cast<int>(B.cols()); }

 private:
  SystemModel() = default;
  void validate(bool gate_stability);
};

double spectral_radius(const Eigen::MatrixXd& M);

// Additive false data on the sensor and actuation channels.
struct AttackVector {
  Eigen::VectorXd a_y;  // m
  Eigen::VectorXd a_u;  // l

  static AttackVector zero(int m, int l) {
    return {Eigen::VectorXd::Zero(m), Eigen::VectorXd::Zero(l)};
  }
  bool is_zero() const { return a_y.isZero(0.0) && a_u.isZero(0.0); }
};

struct SimState {
  int k = 0;
  Eigen::VectorXd x;      // true state
  Eigen::VectorXd x_hat;  // estimate
  Eigen::VectorXd y;      // measured output at this step
  Eigen::VectorXd u;      // control applied at this step
  Eigen::VectorXd r;      // residue y - C x_hat
};

// One step of the (possibly attacked) closed loop. The input state supplies
// (k, x, x_hat, u); attack and noise draws belong to step k. Update order:
//   u~_k      = u_k + a_u
//   y_k       = C x_k + D u~_k + v_k + a_y
//   r_k       = y_k - C x_hat_k
//   x_{k+1}   = A x_k + B u~_k + w_k
//   x_hat_{k+1} = A x_hat_k + B u_k + L r_k      (estimator uses its own u)
//   u_{k+1}   = -K x_hat_{k+1}
// The returned state is at k+1; its y and r fields record the measurement and
// residue taken during this transition (index k). With a zero attack this is
// exactly the nominal closed-loop update.
SimState step(const SystemModel& model, const SimState& s, const AttackVector& attack,
              const Eigen::VectorXd& w, const Eigen::VectorXd& v);

// Fixed point of Sigma_e = (A-LC) Sigma_e (A-LC)' + Sigma_w + L Sigma_v L',
// iterated until successive iterates differ by < 1e-12 in max-abs entry.
Eigen::MatrixXd steady_state_error_cov(const SystemModel& model);

// Sigma_r = C Sigma_e C' + Sigma_v; throws ConfigError if singular.
Eigen::MatrixXd residue_cov(const SystemModel& model);

// ---------------------------------------------------------------------------
// Trace-producing simulation with pluggable policies.

struct TraceRow {
  SimState state;        // x, x_hat, y, u, r all at index k
  AttackVector attack;
  double g = 0.0;        // windowed chi^2 statistic
  double Th = 0.0;       // threshold in force
  int win_l = 1;         // window length in force
  bool alarm = false;
  bool attack_active = false;
  bool controller_mode = false;  // true when the mitigating agent supplied u
};

struct SimTrace {
  std::vector<TraceRow> rows;
  Eigen::VectorXd final_x, final_x_hat;  // state after the last recorded row
  bool diverged = false;
  int requested_steps = 0;
};

struct ControlView {
  int k;
  const Eigen::VectorXd& x_hat;
  const Eigen::VectorXd& y_prev;     // zero at k = 0
  const Eigen::VectorXd& u_default;  // -K x_hat
  bool alarm_prev;
};
struct AttackView {
  int k;
  const Eigen::VectorXd& y_prev;
  const Eigen::VectorXd& u;       // control chosen this step
  double Th_prev;
};
struct DetectorView {
  int k;
  const Eigen::VectorXd& r;       // current residue
  const Eigen::VectorXd& y;       // current (possibly forged) output
};

struct ControlDecision {
  Eigen::VectorXd u;
  bool agent_mode = false;
};
struct AttackDecision {
  AttackVector vec;
  bool active = false;
};
struct DetectorDecision {
  double Th;
  int l;
};

using ControlPolicy = std::function<ControlDecision(const ControlView&, Rng&)>;
using AttackPolicy = std::function<AttackDecision(const AttackView&, Rng&)>;
using DetectorPolicy = std::function<DetectorDecision(const DetectorView&, Rng&)>;

ControlPolicy default_control_policy();
AttackPolicy zero_attack_policy();
DetectorPolicy constant_detector_policy(double Th, int l);

struct SimOptions {
  int steps = 100;
  std::uint64_t seed = 0;
  // Overrides the prior mean x0_bar: x ~ N(x0, Sigma_0) and x_hat_0 = x0.
  // Default: x ~ N(x0_mean, Sigma_0), x_hat_0 = x0_mean.
  std::optional<Eigen::VectorXd> x0;
  double divergence_limit = 1e6;
  // Invoked after each row is appended; return false to end the episode.
  std::function<bool(const SimTrace&)> on_row;
};

// Runs the loop for opts.steps steps (or until divergence / on_row stop).
// Deterministic given (model, policies, seed): noise, initial state and policy
// randomness are drawn from separate derived streams, so a policy that draws
// nothing cannot shift the noise sequence.
SimTrace simulate(const SystemModel& model, const SimOptions& opts,
                  const AttackPolicy& attack_policy, const DetectorPolicy& detector_policy,
                  const ControlPolicy& control_policy);

}  // namespace fdimon
