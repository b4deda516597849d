#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <string>
#include <vector>

#include "fdimon/ddpg.hpp"
#include "fdimon/lti.hpp"
#include "fdimon/region.hpp"

namespace fdimon {

// Observation/action binding for the three agents. Constant observation
// components (region bounds) are folded into normalization scales; features
// are clamped to [-3, 3].
struct AgentSpaces {
  int n = 0, m = 0, p = 0;  // state / output / input widths
  Eigen::VectorXd y_scale;  // per output row, from the X_S image under C
  Eigen::VectorXd r_scale;  // 10 * sqrt(diag Sigma_r)
  Eigen::VectorXd eps_y;    // attack bound on sensors (symmetric)
  Eigen::VectorXd eps_u;    // attack/actuation bound (symmetric)
  double Th_min = 0.5;
  double Th_max = 50.0;
  int l_max = 10;

  static AgentSpaces build(const SystemModel& model, const Box& X_S,
                           const Eigen::MatrixXd& Sigma_r, Eigen::VectorXd eps_y,
                           Eigen::VectorXd eps_u, double Th_min, double Th_max, int l_max);

  int attacker_obs_dim() const { return m + p + 1; }
  int detector_obs_dim() const { return 2 * m; }
  int controller_obs_dim() const { return m; }

  Eigen::VectorXd attacker_obs(const Eigen::VectorXd& y_prev, const Eigen::VectorXd& u,
                               double Th_prev) const;
  Eigen::VectorXd detector_obs(const Eigen::VectorXd& r, const Eigen::VectorXd& y) const;
  Eigen::VectorXd controller_obs(const Eigen::VectorXd& y_prev) const;

  // Actor output bounds per agent.
  void attacker_bounds(Eigen::VectorXd& lo, Eigen::VectorXd& hi) const;
  void detector_bounds(Eigen::VectorXd& lo, Eigen::VectorXd& hi) const;
  void controller_bounds(Eigen::VectorXd& lo, Eigen::VectorXd& hi) const;

  AttackVector decode_attack(const Eigen::VectorXd& action) const;
  DetectorDecision decode_detector(const Eigen::VectorXd& action) const;
  Eigen::VectorXd decode_control(const Eigen::VectorXd& action) const;
};

struct RewardSpec {
  double w1 = 1.0;
  double w2 = 1.0;
  Eigen::VectorXd W3;        // diagonal weights; default 1/S_j^2
  double epsilon = 0.05;     // max allowable analytic FAR
  double far_penalty = 1.0;
  double exit_bonus = 50.0;     // attacker, on leaving X_S
  double exit_penalty = 100.0;  // controller, on leaving X_S
};

// True when the recorded state left the safe region at this row.
bool safety_exit_event(const TraceRow& row, const Box& X_S);

// Per-step rewards, pure functions of the recorded row (so that logged
// returns can be recomputed from a persisted trace bit-identically).
double reward_detector(const RewardSpec& spec, const TraceRow& row, int m);
double reward_attacker(const RewardSpec& spec, const TraceRow& row, const Box& X_S,
                       bool exit_event);
double reward_controller(const RewardSpec& spec, const TraceRow& row, const Box& X_R,
                         bool exit_event);

// rewards[i] = {attacker, detector, controller} for row i of the trace.
std::vector<std::array<double, 3>> recompute_rewards(const RewardSpec& spec,
                                                     const SimTrace& trace, const Box& X_R,
                                                     const Box& X_S, int m);

struct MultiAgentSystem {
  DdpgAgent attacker, detector, controller;

  static MultiAgentSystem create(const AgentSpaces& spaces, const DdpgConfig& cfg,
                                 std::uint64_t master_seed);
};

enum class AttackScheduleMode { Alternate, None, All };

struct TrainSchedule {
  int episodes = 3000;
  int steps_per_episode = 100;
  int rollouts_per_episode = 1;
  AttackScheduleMode attack_mode = AttackScheduleMode::Alternate;
  int attack_onset_max = 50;  // onset drawn uniformly from [0, onset_max]
  int checkpoint_every = 100;
  // The detector's threshold map needs finer resolution than the other two
  // policies; it gets this many gradient steps per environment step.
  int detector_updates_per_step = 2;
};

struct EpisodeLog {
  int episode = 0;
  double attacker_return = 0.0;
  double detector_return = 0.0;
  double controller_return = 0.0;
  double empirical_tpr = 0.0;
  double empirical_far = 0.0;
};

struct TrainOptions {
  TrainSchedule schedule;
  std::uint64_t master_seed = 1;
  std::string checkpoint_path;     // empty: no checkpoints
  bool capture_last_trace = false;
  bool verbose = false;
};

struct TrainResult {
  std::vector<EpisodeLog> log;
  int start_episode = 0;  // nonzero when resumed from a checkpoint
  SimTrace last_trace;
  std::vector<std::array<double, 3>> last_trace_rewards;
};

// Competitive/collaborative offline training: per episode, initializes the
// state uniformly from X_R, alternates attack-present and attack-free
// episodes, lets attacker then detector act each step (controller agent only
// under the alarm && x_hat in X_S \ X_R condition), feeds all three replay
// buffers and trains each agent every step.
TrainResult train_multi_agent(const SystemModel& model, const AgentSpaces& spaces,
                              const RewardSpec& rewards, const Box& X_R, const Box& X_S,
                              MultiAgentSystem& agents, const TrainOptions& opts);

// Checkpoint helpers (full training state of all three agents).
void save_checkpoint(const std::string& path, const MultiAgentSystem& agents,
                     int next_episode, std::uint64_t master_seed);
// Returns the next episode index, or nullopt when no checkpoint exists.
std::optional<int> load_checkpoint(const std::string& path, MultiAgentSystem& agents,
                                   std::uint64_t expected_seed);

// ---------------------------------------------------------------------------
// Online monitoring (Algorithm 2's deployment loop).

struct EpisodeResult {
  SimTrace trace;
  int detections = 0;       // alarm during active attack
  int false_alarms = 0;     // alarm without active attack
  int attacked_steps = 0;
  int unattacked_steps = 0;
  int total_alarms = 0;
  bool safety_violated = false;
  std::optional<int> returned_to_XR_step;
  std::optional<int> detection_latency;  // first alarm at/after onset, minus onset
};

struct MonitorSetup {
  const DdpgAgent* detector = nullptr;            // nullptr: use const_detector
  std::optional<DetectorDecision> const_detector; // fixed (Th, l) baseline
  const DdpgAgent* controller = nullptr;          // optional mitigating agent
  AttackPolicy attack;                            // zero_attack_policy() if none
};

struct MonitorOptions {
  int steps = 100;
  std::uint64_t seed = 0;
  std::optional<Eigen::VectorXd> x0;
};

EpisodeResult online_monitor(const SystemModel& model, const AgentSpaces& spaces,
                             const MonitorSetup& setup, const MonitorOptions& opts,
                             const Box& X_R, const Box& X_S);

// Policy adapters.
AttackPolicy trained_attack_policy(const DdpgAgent& attacker, const AgentSpaces& spaces,
                                   int onset);
AttackPolicy scripted_attack_policy(Eigen::VectorXd a_y, Eigen::VectorXd a_u, int onset);
DetectorPolicy trained_detector_policy(const DdpgAgent& detector, const AgentSpaces& spaces);
ControlPolicy switched_control_policy(const DdpgAgent* controller, const AgentSpaces& spaces,
                                      const Box& X_R, const Box& X_S);

}  // namespace fdimon
