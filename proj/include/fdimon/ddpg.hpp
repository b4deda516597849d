#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>

#include "fdimon/mlp.hpp"
#include "fdimon/replay.hpp"

namespace fdimon {

struct DdpgConfig {
  std::array<int, 3> hidden = {64, 64, 64};
  double critic_lr = 1e-3;
  double actor_lr = 1e-4;
  double gamma = 0.99;
  double tau = 0.005;
  std::size_t buffer_capacity = 100000;
  int batch_size = 64;
  // Exploration noise std as a fraction of the per-dimension action range,
  // decayed linearly from initial to final over training.
  double noise_frac_initial = 0.1;
  double noise_frac_final = 0.01;
};

// Deterministic-policy actor/critic pair with target copies and a replay
// buffer. The critic takes concatenated (obs, action).
class DdpgAgent {
 public:
  DdpgAgent(int obs_dim, int act_dim, Eigen::VectorXd act_lo, Eigen::VectorXd act_hi,
            const DdpgConfig& cfg, Rng& init_rng);

  // Actor forward pass; with explore, adds Gaussian noise scaled by the
  // current exploration fraction and clips to bounds.
  Eigen::VectorXd act(const Eigen::VectorXd& obs, bool explore, Rng& rng) const;

  // progress in [0, 1]; sets the exploration noise along the linear decay.
  void set_exploration_progress(double progress);

  // Critic regression targets r + gamma * (1 - done) * Q_target(s', mu_target(s')).
  Eigen::VectorXd compute_critic_targets(std::span<const Transition* const> batch) const;

  // One critic + actor update on the batch followed by a soft target update.
  // Returns (critic mse loss, mean Q under the current actor).
  std::pair<double, double> train_step(std::span<const Transition* const> batch);

  // Samples a batch from the buffer and trains; no-op while the buffer holds
  // fewer than batch_size transitions. Returns losses or (0,0) when skipped.
  std::pair<double, double> train_from_buffer(Rng& rng);

  // target <- tau * main + (1 - tau) * target
  void soft_update(double tau);

  ReplayBuffer& buffer() { return buffer_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const Mlp& actor() const { return actor_; }
  const Mlp& critic() const { return critic_; }
  const Mlp& target_actor() const { return target_actor_; }
  const Mlp& target_critic() const { return target_critic_; }
  Mlp& mutable_actor() { return actor_; }
  const DdpgConfig& config() const { return cfg_; }
  int obs_dim() const { return actor_.input_dim(); }
  int act_dim() const { return actor_.output_dim(); }
  const Eigen::VectorXd& act_lo() const { return act_lo_; }
  const Eigen::VectorXd& act_hi() const { return act_hi_; }
  double exploration_frac() const { return noise_frac_; }

  // Weight persistence: versioned binary of all four networks plus a header
  // recording the agent role and training seed. Loading validates shapes.
  void save_weights(const std::string& path, const std::string& role,
                    std::uint64_t seed) const;
  static DdpgAgent load_weights(const std::string& path, const DdpgConfig& cfg,
                                std::string* role_out = nullptr,
                                std::uint64_t* seed_out = nullptr);

  // Full training state (networks, Adam moments, replay buffer) for resumable
  // checkpoints.
  void serialize(std::ostream& out) const;
  void deserialize(std::istream& in);

 private:
  DdpgAgent(const DdpgConfig& cfg);

  DdpgConfig cfg_;
  Eigen::VectorXd act_lo_, act_hi_;
  Mlp actor_, critic_, target_actor_, target_critic_;
  AdamState actor_opt_, critic_opt_;
  ReplayBuffer buffer_;
  double noise_frac_;
};

}  // namespace fdimon
