#include "fdimon/ddpg.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "fdimon/errors.hpp"

namespace fdimon {

namespace {

constexpr char kWeightsMagic[4] = {'F', 'D', 'M', 'W'};
constexpr std::uint32_t kWeightsVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_f64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
double read_f64(std::istream& in) {
  double v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  write_u32(out, static_cast<std::uint32_t>(m.rows()));
  write_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) write_f64(out, m(r, c));
}
Eigen::MatrixXd read_matrix(std::istream& in) {
  const std::uint32_t rows = read_u32(in);
  const std::uint32_t cols = read_u32(in);
  Eigen::MatrixXd m(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = read_f64(in);
  return m;
}
void write_vector(std::ostream& out, const Eigen::VectorXd& v) {
  write_u32(out, static_cast<std::uint32_t>(v.size()));
  for (int i = 0; i < v.size(); ++i) write_f64(out, v(i));
}
Eigen::VectorXd read_vector(std::istream& in) {
  const std::uint32_t n = read_u32(in);
  Eigen::VectorXd v(n);
  for (std::uint32_t i = 0; i < n; ++i) v(i) = read_f64(in);
  return v;
}

void write_mlp(std::ostream& out, const Mlp& net) {
  write_u32(out, static_cast<std::uint32_t>(net.n_layers()));
  write_u32(out, net.out_act == OutputActivation::Affine ? 0u : 1u);
  write_vector(out, net.act_lo);
  write_vector(out, net.act_hi);
  for (int i = 0; i < net.n_layers(); ++i) {
    write_matrix(out, net.W[i]);
    write_vector(out, net.b[i]);
  }
}
Mlp read_mlp(std::istream& in) {
  Mlp net;
  const std::uint32_t layers = read_u32(in);
  net.out_act = read_u32(in) == 0 ? OutputActivation::Affine : OutputActivation::BoundedTanh;
  net.act_lo = read_vector(in);
  net.act_hi = read_vector(in);
  for (std::uint32_t i = 0; i < layers; ++i) {
    net.W.push_back(read_matrix(in));
    net.b.push_back(read_vector(in));
  }
  return net;
}

void write_adam(std::ostream& out, const AdamState& s) {
  write_u64(out, static_cast<std::uint64_t>(s.t));
  write_u32(out, static_cast<std::uint32_t>(s.mW.size()));
  for (std::size_t i = 0; i < s.mW.size(); ++i) {
    write_matrix(out, s.mW[i]);
    write_matrix(out, s.vW[i]);
    write_vector(out, s.mb[i]);
    write_vector(out, s.vb[i]);
  }
}
AdamState read_adam(std::istream& in) {
  AdamState s;
  s.t = static_cast<long>(read_u64(in));
  const std::uint32_t n = read_u32(in);
  for (std::uint32_t i = 0; i < n; ++i) {
    s.mW.push_back(read_matrix(in));
    s.vW.push_back(read_matrix(in));
    s.mb.push_back(read_vector(in));
    s.vb.push_back(read_vector(in));
  }
  return s;
}

Eigen::MatrixXd concat_cols(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

}  // namespace

DdpgAgent::DdpgAgent(const DdpgConfig& cfg)
    : cfg_(cfg), buffer_(cfg.buffer_capacity), noise_frac_(cfg.noise_frac_initial) {}

DdpgAgent::DdpgAgent(int obs_dim, int act_dim, Eigen::VectorXd act_lo, Eigen::VectorXd act_hi,
                     const DdpgConfig& cfg, Rng& init_rng)
    : cfg_(cfg),
      act_lo_(std::move(act_lo)),
      act_hi_(std::move(act_hi)),
      actor_(make_mlp(obs_dim, cfg.hidden, act_dim, OutputActivation::BoundedTanh, init_rng,
                      act_lo_, act_hi_)),
      critic_(make_mlp(obs_dim + act_dim, cfg.hidden, 1, OutputActivation::Affine, init_rng)),
      target_actor_(actor_),
      target_critic_(critic_),
      actor_opt_(AdamState::zeros_like(actor_)),
      critic_opt_(AdamState::zeros_like(critic_)),
      buffer_(cfg.buffer_capacity),
      noise_frac_(cfg.noise_frac_initial) {
  if (act_lo_.size() != act_dim || act_hi_.size() != act_dim)
    throw ConfigError("DdpgAgent: action bounds must match the action width");
}

Eigen::VectorXd DdpgAgent::act(const Eigen::VectorXd& obs, bool explore, Rng& rng) const {
  Eigen::VectorXd a = actor_.forward(obs);
  if (explore) {
    for (int i = 0; i < a.size(); ++i) {
      const double range = act_hi_(i) - act_lo_(i);
      a(i) += noise_frac_ * range * rng.gaussian();
    }
  }
  return a.cwiseMax(act_lo_).cwiseMin(act_hi_);
}

void DdpgAgent::set_exploration_progress(double progress) {
  const double p = std::clamp(progress, 0.0, 1.0);
  noise_frac_ = cfg_.noise_frac_initial + p * (cfg_.noise_frac_final - cfg_.noise_frac_initial);
}

Eigen::VectorXd DdpgAgent::compute_critic_targets(std::span<const Transition* const> batch) const {
  const int B = static_cast<int>(batch.size());
  Eigen::MatrixXd next_obs(B, obs_dim());
  Eigen::VectorXd rewards(B), not_done(B);
  for (int i = 0; i < B; ++i) {
    next_obs.row(i) = batch[i]->next_obs;
    rewards(i) = batch[i]->reward;
    not_done(i) = batch[i]->done ? 0.0 : 1.0;
  }
  const Eigen::MatrixXd next_actions = target_actor_.forward_batch(next_obs);
  const Eigen::MatrixXd q_next = target_critic_.forward_batch(concat_cols(next_obs, next_actions));
  return rewards + cfg_.gamma * not_done.cwiseProduct(q_next.col(0));
}

std::pair<double, double> DdpgAgent::train_step(std::span<const Transition* const> batch) {
  const int B = static_cast<int>(batch.size());
  if (B == 0) throw UsageError("DdpgAgent::train_step: empty batch");

  Eigen::MatrixXd obs(B, obs_dim());
  Eigen::MatrixXd actions(B, act_dim());
  for (int i = 0; i < B; ++i) {
    if (batch[i]->obs.size() != obs_dim() || batch[i]->action.size() != act_dim() ||
        batch[i]->next_obs.size() != obs_dim())
      throw UsageError("DdpgAgent::train_step: transition dimensions do not match agent");
    obs.row(i) = batch[i]->obs;
    actions.row(i) = batch[i]->action;
  }
  const Eigen::VectorXd targets = compute_critic_targets(batch);

  // Critic: minimize mean squared TD error.
  ForwardCache critic_cache;
  const Eigen::MatrixXd q = forward_cached(critic_, concat_cols(obs, actions), critic_cache);
  const Eigen::VectorXd err = q.col(0) - targets;
  const double critic_loss = err.squaredNorm() / B;
  Eigen::MatrixXd dq = (2.0 / B) * err;
  Grads critic_grads = backward(critic_, critic_cache, dq);
  adam_update(critic_, critic_opt_, critic_grads, cfg_.critic_lr);

  // Actor: ascend mean Q(s, mu(s)) through the (pre-update-independent) critic.
  ForwardCache actor_cache;
  const Eigen::MatrixXd mu = forward_cached(actor_, obs, actor_cache);
  ForwardCache chain_cache;
  const Eigen::MatrixXd q_mu = forward_cached(critic_, concat_cols(obs, mu), chain_cache);
  const double actor_objective = q_mu.col(0).mean();
  Eigen::MatrixXd ones = Eigen::MatrixXd::Constant(B, 1, 1.0 / B);
  const Grads chain = backward(critic_, chain_cache, ones);
  const Eigen::MatrixXd dmu = -chain.dinput.rightCols(act_dim());  // descend -Q
  Grads actor_grads = backward(actor_, actor_cache, dmu);
  adam_update(actor_, actor_opt_, actor_grads, cfg_.actor_lr);

  soft_update(cfg_.tau);

  if (!std::isfinite(critic_loss) || !std::isfinite(actor_objective) ||
      !actor_.all_finite() || !critic_.all_finite()) {
    std::ostringstream msg;
    msg << "DdpgAgent::train_step: non-finite update (critic_loss=" << critic_loss
        << ", actor_objective=" << actor_objective << ")";
    throw TrainingAbort(msg.str());
  }
  return {critic_loss, actor_objective};
}

std::pair<double, double> DdpgAgent::train_from_buffer(Rng& rng) {
  if (buffer_.size() < static_cast<std::size_t>(cfg_.batch_size)) return {0.0, 0.0};
  const auto batch = buffer_.sample(cfg_.batch_size, rng);
  return train_step(batch);
}

void DdpgAgent::soft_update(double tau) {
  for (int i = 0; i < actor_.n_layers(); ++i) {
    target_actor_.W[i] = tau * actor_.W[i] + (1.0 - tau) * target_actor_.W[i];
    target_actor_.b[i] = tau * actor_.b[i] + (1.0 - tau) * target_actor_.b[i];
    target_critic_.W[i] = tau * critic_.W[i] + (1.0 - tau) * target_critic_.W[i];
    target_critic_.b[i] = tau * critic_.b[i] + (1.0 - tau) * target_critic_.b[i];
  }
}

void DdpgAgent::save_weights(const std::string& path, const std::string& role,
                             std::uint64_t seed) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("save_weights: cannot open " + path);
  out.write(kWeightsMagic, 4);
  write_u32(out, kWeightsVersion);
  write_u32(out, static_cast<std::uint32_t>(role.size()));
  out.write(role.data(), static_cast<std::streamsize>(role.size()));
  write_u64(out, seed);
  write_vector(out, act_lo_);
  write_vector(out, act_hi_);
  write_mlp(out, actor_);
  write_mlp(out, critic_);
  write_mlp(out, target_actor_);
  write_mlp(out, target_critic_);
  if (!out) throw ConfigError("save_weights: write failed for " + path);
}

DdpgAgent DdpgAgent::load_weights(const std::string& path, const DdpgConfig& cfg,
                                  std::string* role_out, std::uint64_t* seed_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("load_weights: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kWeightsMagic, 4) != 0)
    throw ConfigError("load_weights: not a weights file: " + path);
  const std::uint32_t version = read_u32(in);
  if (version != kWeightsVersion)
    throw ConfigError("load_weights: unsupported format version in " + path);
  const std::uint32_t role_len = read_u32(in);
  std::string role(role_len, '\0');
  in.read(role.data(), role_len);
  const std::uint64_t seed = read_u64(in);
  if (role_out) *role_out = role;
  if (seed_out) *seed_out = seed;

  DdpgAgent agent(cfg);
  agent.act_lo_ = read_vector(in);
  agent.act_hi_ = read_vector(in);
  agent.actor_ = read_mlp(in);
  agent.critic_ = read_mlp(in);
  agent.target_actor_ = read_mlp(in);
  agent.target_critic_ = read_mlp(in);
  if (!in) throw ConfigError("load_weights: truncated file " + path);
  agent.actor_opt_ = AdamState::zeros_like(agent.actor_);
  agent.critic_opt_ = AdamState::zeros_like(agent.critic_);

  for (std::size_t i = 0; i < 3; ++i) {
    if (agent.actor_.W.size() != 4 || agent.critic_.W.size() != 4) break;
    if (agent.actor_.W[i].rows() != cfg.hidden[i])
      throw ConfigError("load_weights: actor hidden layer width does not match config");
    if (agent.critic_.W[i].rows() != cfg.hidden[i])
      throw ConfigError("load_weights: critic hidden layer width does not match config");
  }
  return agent;
}

void DdpgAgent::serialize(std::ostream& out) const {
  write_vector(out, act_lo_);
  write_vector(out, act_hi_);
  write_mlp(out, actor_);
  write_mlp(out, critic_);
  write_mlp(out, target_actor_);
  write_mlp(out, target_critic_);
  write_adam(out, actor_opt_);
  write_adam(out, critic_opt_);
  write_f64(out, noise_frac_);
  write_u64(out, buffer_.size());
  for (std::size_t i = 0; i < buffer_.size(); ++i) {
    const Transition& t = buffer_.at(i);
    write_vector(out, t.obs);
    write_vector(out, t.action);
    write_f64(out, t.reward);
    write_vector(out, t.next_obs);
    write_u32(out, t.done ? 1 : 0);
  }
}

void DdpgAgent::deserialize(std::istream& in) {
  act_lo_ = read_vector(in);
  act_hi_ = read_vector(in);
  actor_ = read_mlp(in);
  critic_ = read_mlp(in);
  target_actor_ = read_mlp(in);
  target_critic_ = read_mlp(in);
  actor_opt_ = read_adam(in);
  critic_opt_ = read_adam(in);
  noise_frac_ = read_f64(in);
  const std::uint64_t count = read_u64(in);
  buffer_.clear();
  for (std::uint64_t i = 0; i < count; ++i) {
    Transition t;
    t.obs = read_vector(in);
    t.action = read_vector(in);
    t.reward = read_f64(in);
    t.next_obs = read_vector(in);
    t.done = read_u32(in) != 0;
    buffer_.push(std::move(t));
  }
  if (!in) throw ConfigError("DdpgAgent::deserialize: truncated checkpoint stream");
}

}  // namespace fdimon
