#include "fdimon/env.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "fdimon/chi2.hpp"
#include "fdimon/errors.hpp"

namespace fdimon {

namespace {

constexpr std::uint64_t kStreamSim = 0x53494D;
constexpr std::uint64_t kStreamTrain = 0x545249;
constexpr std::uint64_t kStreamInit = 0x494E49;
constexpr std::uint64_t kStreamOnset = 0x4F4E53;
constexpr std::uint64_t kStreamX0 = 0x583052;

std::uint64_t stream_seed(std::uint64_t master, std::uint64_t domain, std::uint64_t idx) {
  return splitmix64(splitmix64(master + domain) ^ splitmix64(idx));
}

double clamp_feature(double v) { return std::clamp(v, -3.0, 3.0); }

constexpr char kCheckpointMagic[4] = {'F', 'D', 'M', 'C'};

}  // namespace

AgentSpaces AgentSpaces::build(const SystemModel& model, const Box& X_S,
                               const Eigen::MatrixXd& Sigma_r, Eigen::VectorXd eps_y,
                               Eigen::VectorXd eps_u, double Th_min, double Th_max, int l_max) {
  AgentSpaces s;
  s.n = model.state_dim();
  s.m = model.output_dim();
  s.p = model.input_dim();
  if (eps_y.size() != s.m || eps_u.size() != s.p)
    throw ConfigError("AgentSpaces: eps_y/eps_u dimensions do not match model");
  if (!(Th_min > 0.0 && Th_min < Th_max)) throw ConfigError("AgentSpaces: need 0 < Th_min < Th_max");
  if (l_max < 1) throw ConfigError("AgentSpaces: l_max must be >= 1");
  s.eps_y = std::move(eps_y);
  s.eps_u = std::move(eps_u);
  s.Th_min = Th_min;
  s.Th_max = Th_max;
  s.l_max = l_max;

  s.y_scale.resize(s.m);
  for (int j = 0; j < s.m; ++j) {
    double acc = 0.0;
    for (int d = 0; d < s.n; ++d)
      acc += std::abs(model.C(j, d)) * std::max(std::abs(X_S.lo(d)), std::abs(X_S.hi(d)));
    s.y_scale(j) = acc > 0.0 ? acc : 1.0;
  }
  s.r_scale = 3.0 * Sigma_r.diagonal().cwiseSqrt();
  for (int j = 0; j < s.m; ++j)
    if (!(s.r_scale(j) > 0.0)) s.r_scale(j) = 1.0;
  return s;
}

Eigen::VectorXd AgentSpaces::attacker_obs(const Eigen::VectorXd& y_prev,
                                          const Eigen::VectorXd& u, double Th_prev) const {
  Eigen::VectorXd obs(attacker_obs_dim());
  for (int j = 0; j < m; ++j) obs(j) = clamp_feature(y_prev(j) / y_scale(j));
  for (int j = 0; j < p; ++j) obs(m + j) = clamp_feature(u(j) / eps_u(j));
  obs(m + p) = clamp_feature(Th_prev / Th_max);
  return obs;
}

Eigen::VectorXd AgentSpaces::detector_obs(const Eigen::VectorXd& r,
                                          const Eigen::VectorXd& y) const {
  Eigen::VectorXd obs(detector_obs_dim());
  for (int j = 0; j < m; ++j) obs(j) = clamp_feature(r(j) / r_scale(j));
  for (int j = 0; j < m; ++j) obs(m + j) = clamp_feature(y(j) / y_scale(j));
  return obs;
}

Eigen::VectorXd AgentSpaces::controller_obs(const Eigen::VectorXd& y_prev) const {
  Eigen::VectorXd obs(controller_obs_dim());
  for (int j = 0; j < m; ++j) obs(j) = clamp_feature(y_prev(j) / y_scale(j));
  return obs;
}

void AgentSpaces::attacker_bounds(Eigen::VectorXd& lo, Eigen::VectorXd& hi) const {
  lo.resize(m + p);
  hi.resize(m + p);
  lo << -eps_y, -eps_u;
  hi << eps_y, eps_u;
}

void AgentSpaces::detector_bounds(Eigen::VectorXd& lo, Eigen::VectorXd& hi) const {
  lo.resize(2);
  hi.resize(2);
  lo << Th_min, 1.0;
  hi << Th_max, static_cast<double>(l_max);
}

void AgentSpaces::controller_bounds(Eigen::VectorXd& lo, Eigen::VectorXd& hi) const {
  lo = -eps_u;
  hi = eps_u;
}

AttackVector AgentSpaces::decode_attack(const Eigen::VectorXd& action) const {
  AttackVector v;
  v.a_y = action.head(m).cwiseMax(-eps_y).cwiseMin(eps_y);
  v.a_u = action.tail(p).cwiseMax(-eps_u).cwiseMin(eps_u);
  return v;
}

DetectorDecision AgentSpaces::decode_detector(const Eigen::VectorXd& action) const {
  DetectorDecision d;
  d.Th = std::clamp(action(0), Th_min, Th_max);
  d.l = static_cast<int>(std::llround(std::clamp(action(1), 1.0, static_cast<double>(l_max))));
  return d;
}

Eigen::VectorXd AgentSpaces::decode_control(const Eigen::VectorXd& action) const {
  return action.cwiseMax(-eps_u).cwiseMin(eps_u);
}

bool safety_exit_event(const TraceRow& row, const Box& X_S) {
  return !X_S.contains(row.state.x);
}

double reward_detector(const RewardSpec& spec, const TraceRow& row, int m) {
  double reward = 0.0;
  if (row.alarm && row.attack_active) reward += spec.w1;
  if (row.alarm && !row.attack_active) reward -= spec.w2;
  DetectorConfig cfg;
  cfg.l = row.win_l;
  cfg.Th = row.Th;
  cfg.l_max = std::max(cfg.l, 1);
  const double analytic_far = far(cfg, m);
  reward -= spec.far_penalty * std::max(0.0, analytic_far - spec.epsilon);
  return reward;
}

double reward_attacker(const RewardSpec& spec, const TraceRow& row, const Box& X_S,
                       bool exit_event) {
  double reward = 0.0;
  if (row.alarm && row.attack_active) reward -= spec.w1;
  if (row.alarm && !row.attack_active) reward += spec.w2;
  // Signed quadratic distance to the safety boundary: negative deep inside,
  // zero on the boundary, positive outside.
  for (int j = 0; j < row.state.x.size(); ++j) {
    const double S = std::max(std::abs(X_S.lo(j)), std::abs(X_S.hi(j)));
    const double d = std::abs(row.state.x(j)) - S;
    reward += (d >= 0.0 ? 1.0 : -1.0) * spec.W3(j) * d * d;
  }
  if (exit_event) reward += spec.exit_bonus;
  return reward;
}

double reward_controller(const RewardSpec& spec, const TraceRow& row, const Box& X_R,
                         bool exit_event) {
  double reward = 0.0;
  for (int j = 0; j < row.state.x_hat.size(); ++j) {
    const double R = std::max(std::abs(X_R.lo(j)), std::abs(X_R.hi(j)));
    const double d = std::max(0.0, std::abs(row.state.x_hat(j)) - R);
    reward -= spec.W3(j) * d * d;
  }
  if (exit_event) reward -= spec.exit_penalty;
  return reward;
}

std::vector<std::array<double, 3>> recompute_rewards(const RewardSpec& spec,
                                                     const SimTrace& trace, const Box& X_R,
                                                     const Box& X_S, int m) {
  std::vector<std::array<double, 3>> out;
  out.reserve(trace.rows.size());
  for (const TraceRow& row : trace.rows) {
    const bool exit_ev = safety_exit_event(row, X_S);
    out.push_back({reward_attacker(spec, row, X_S, exit_ev),
                   reward_detector(spec, row, m),
                   reward_controller(spec, row, X_R, exit_ev)});
  }
  return out;
}

MultiAgentSystem MultiAgentSystem::create(const AgentSpaces& spaces, const DdpgConfig& cfg,
                                          std::uint64_t master_seed) {
  Eigen::VectorXd lo, hi;
  Rng rng_a(stream_seed(master_seed, kStreamInit, 1));
  Rng rng_d(stream_seed(master_seed, kStreamInit, 2));
  Rng rng_c(stream_seed(master_seed, kStreamInit, 3));
  spaces.attacker_bounds(lo, hi);
  DdpgAgent attacker(spaces.attacker_obs_dim(), spaces.m + spaces.p, lo, hi, cfg, rng_a);
  spaces.detector_bounds(lo, hi);
  DdpgAgent detector(spaces.detector_obs_dim(), 2, lo, hi, cfg, rng_d);
  spaces.controller_bounds(lo, hi);
  DdpgAgent controller(spaces.controller_obs_dim(), spaces.p, lo, hi, cfg, rng_c);
  return MultiAgentSystem{std::move(attacker), std::move(detector), std::move(controller)};
}

namespace {

struct Pending {
  Eigen::VectorXd obs, action;
  double reward = 0.0;
  bool open = false;
};

void complete(Pending& p, ReplayBuffer& buffer, const Eigen::VectorXd& next_obs, bool done) {
  if (!p.open) return;
  buffer.push(Transition{p.obs, p.action, p.reward, next_obs, done});
  p.open = false;
}

void complete_terminal(Pending& p, ReplayBuffer& buffer) {
  if (!p.open) return;
  buffer.push(Transition{p.obs, p.action, p.reward, p.obs, true});
  p.open = false;
}

}  // namespace

TrainResult train_multi_agent(const SystemModel& model, const AgentSpaces& spaces,
                              const RewardSpec& rewards, const Box& X_R, const Box& X_S,
                              MultiAgentSystem& agents, const TrainOptions& opts) {
  const TrainSchedule& sched = opts.schedule;
  if (sched.steps_per_episode < 1 || sched.rollouts_per_episode < 1)
    throw UsageError("train_multi_agent: invalid schedule");
  const int m = spaces.m;

  TrainResult result;
  int start_episode = 0;
  if (!opts.checkpoint_path.empty()) {
    if (auto resumed = load_checkpoint(opts.checkpoint_path, agents, opts.master_seed)) {
      start_episode = *resumed;
      result.start_episode = start_episode;
    }
  }

  for (int e = start_episode; e < sched.episodes; ++e) {
    const bool attack_episode =
        sched.attack_mode == AttackScheduleMode::All ||
        (sched.attack_mode == AttackScheduleMode::Alternate && e % 2 == 1);

    const double progress =
        sched.episodes > 1 ? static_cast<double>(e) / (sched.episodes - 1) : 1.0;
    agents.attacker.set_exploration_progress(progress);
    agents.detector.set_exploration_progress(progress);
    agents.controller.set_exploration_progress(progress);

    EpisodeLog log;
    log.episode = e;
    int detections = 0, false_alarms = 0, attacked = 0, unattacked = 0;

    for (int rr = 0; rr < sched.rollouts_per_episode; ++rr) {
      const std::uint64_t idx =
          static_cast<std::uint64_t>(e) * sched.rollouts_per_episode + rr;
      Rng train_rng(stream_seed(opts.master_seed, kStreamTrain, idx));
      Rng onset_rng(stream_seed(opts.master_seed, kStreamOnset, idx));
      Rng x0_rng(stream_seed(opts.master_seed, kStreamX0, idx));

      const int onset =
          attack_episode
              ? std::min(sched.attack_onset_max,
                         static_cast<int>(onset_rng.uniform() * (sched.attack_onset_max + 1)))
              : 0;

      Pending att, det, ctl;
      const bool capture = opts.capture_last_trace && e == sched.episodes - 1 &&
                           rr == sched.rollouts_per_episode - 1;
      std::vector<std::array<double, 3>> live_rewards;

      ControlPolicy control = [&](const ControlView& view, Rng& rng) {
        const Eigen::VectorXd obs = spaces.controller_obs(view.y_prev);
        const bool acting = view.alarm_prev && X_S.contains(view.x_hat) &&
                            !X_R.contains(view.x_hat);
        complete(ctl, agents.controller.buffer(), obs, !acting);
        if (!acting) return ControlDecision{view.u_default, false};
        const Eigen::VectorXd action = agents.controller.act(obs, true, rng);
        ctl = Pending{obs, action, 0.0, true};
        return ControlDecision{spaces.decode_control(action), true};
      };

      AttackPolicy attack = [&](const AttackView& view, Rng& rng) {
        const bool active = attack_episode && view.k >= onset;
        const Eigen::VectorXd obs = spaces.attacker_obs(view.y_prev, view.u, view.Th_prev);
        complete(att, agents.attacker.buffer(), obs, !active);
        if (!active) {
          AttackDecision d;
          d.vec = AttackVector::zero(m, spaces.p);
          d.active = false;
          return d;
        }
        const Eigen::VectorXd action = agents.attacker.act(obs, true, rng);
        att = Pending{obs, action, 0.0, true};
        return AttackDecision{spaces.decode_attack(action), true};
      };

      DetectorPolicy detector = [&](const DetectorView& view, Rng& rng) {
        const Eigen::VectorXd obs = spaces.detector_obs(view.r, view.y);
        complete(det, agents.detector.buffer(), obs, false);
        const Eigen::VectorXd action = agents.detector.act(obs, true, rng);
        det = Pending{obs, action, 0.0, true};
        return spaces.decode_detector(action);
      };

      SimOptions sim_opts;
      sim_opts.steps = sched.steps_per_episode;
      sim_opts.seed = stream_seed(opts.master_seed, kStreamSim, idx);
      sim_opts.x0 = X_R.sample_uniform(x0_rng);
      sim_opts.on_row = [&](const SimTrace& trace) -> bool {
        const TraceRow& row = trace.rows.back();
        const bool exit_ev = safety_exit_event(row, X_S);

        const double r_att = reward_attacker(rewards, row, X_S, exit_ev);
        const double r_det = reward_detector(rewards, row, m);
        const double r_ctl = reward_controller(rewards, row, X_R, exit_ev);
        if (capture) live_rewards.push_back({r_att, r_det, r_ctl});
        det.reward = r_det;
        log.detector_return += r_det;
        if (att.open) {
          att.reward = r_att;
          log.attacker_return += r_att;
        }
        if (ctl.open) {
          ctl.reward = r_ctl;
          log.controller_return += r_ctl;
        }

        if (row.alarm && row.attack_active) ++detections;
        if (row.alarm && !row.attack_active) ++false_alarms;
        if (row.attack_active) ++attacked;
        else ++unattacked;

        agents.attacker.train_from_buffer(train_rng);
        for (int u = 0; u < sched.detector_updates_per_step; ++u)
          agents.detector.train_from_buffer(train_rng);
        agents.controller.train_from_buffer(train_rng);

        return !exit_ev;  // attacker success ends the episode, not the run
      };

      SimTrace trace = simulate(model, sim_opts, attack, detector, control);

      complete_terminal(att, agents.attacker.buffer());
      complete_terminal(det, agents.detector.buffer());
      complete_terminal(ctl, agents.controller.buffer());

      if (capture) {
        result.last_trace_rewards = std::move(live_rewards);
        result.last_trace = std::move(trace);
      }
    }

    log.empirical_tpr = attacked > 0 ? static_cast<double>(detections) / attacked : 0.0;
    log.empirical_far = unattacked > 0 ? static_cast<double>(false_alarms) / unattacked : 0.0;
    result.log.push_back(log);

    if (!opts.checkpoint_path.empty() && sched.checkpoint_every > 0 &&
        (e + 1) % sched.checkpoint_every == 0 && e + 1 < sched.episodes) {
      save_checkpoint(opts.checkpoint_path, agents, e + 1, opts.master_seed);
    }
    if (opts.verbose && (e + 1) % 100 == 0) {
      std::cerr << "episode " << (e + 1) << "/" << sched.episodes
                << " det_ret=" << log.detector_return << " tpr=" << log.empirical_tpr
                << " far=" << log.empirical_far << "\n";
    }
  }
  return result;
}

void save_checkpoint(const std::string& path, const MultiAgentSystem& agents,
                     int next_episode, std::uint64_t master_seed) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ConfigError("save_checkpoint: cannot open " + tmp);
    out.write(kCheckpointMagic, 4);
    const std::uint32_t version = 1;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::uint64_t seed = master_seed;
    out.write(reinterpret_cast<const char*>(&seed), sizeof(seed));
    const std::uint32_t episode = static_cast<std::uint32_t>(next_episode);
    out.write(reinterpret_cast<const char*>(&episode), sizeof(episode));
    agents.attacker.serialize(out);
    agents.detector.serialize(out);
    agents.controller.serialize(out);
    if (!out) throw ConfigError("save_checkpoint: write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::optional<int> load_checkpoint(const std::string& path, MultiAgentSystem& agents,
                                   std::uint64_t expected_seed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != std::string(kCheckpointMagic, 4))
    throw ConfigError("load_checkpoint: not a checkpoint file: " + path);
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != 1) throw ConfigError("load_checkpoint: unsupported version");
  std::uint64_t seed = 0;
  in.read(reinterpret_cast<char*>(&seed), sizeof(seed));
  if (seed != expected_seed)
    throw ConfigError("load_checkpoint: checkpoint was written with a different seed");
  std::uint32_t episode = 0;
  in.read(reinterpret_cast<char*>(&episode), sizeof(episode));
  agents.attacker.deserialize(in);
  agents.detector.deserialize(in);
  agents.controller.deserialize(in);
  return static_cast<int>(episode);
}

AttackPolicy trained_attack_policy(const DdpgAgent& attacker, const AgentSpaces& spaces,
                                   int onset) {
  return [&attacker, spaces, onset](const AttackView& view, Rng& rng) {
    if (view.k < onset) {
      AttackDecision d;
      d.vec = AttackVector::zero(spaces.m, spaces.p);
      d.active = false;
      return d;
    }
    const Eigen::VectorXd obs = spaces.attacker_obs(view.y_prev, view.u, view.Th_prev);
    const Eigen::VectorXd action = attacker.act(obs, false, rng);
    return AttackDecision{spaces.decode_attack(action), true};
  };
}

AttackPolicy scripted_attack_policy(Eigen::VectorXd a_y, Eigen::VectorXd a_u, int onset) {
  return [a_y = std::move(a_y), a_u = std::move(a_u), onset](const AttackView& view, Rng&) {
    if (view.k < onset) {
      AttackDecision d;
      d.vec = AttackVector::zero(static_cast<int>(a_y.size()), static_cast<int>(a_u.size()));
      d.active = false;
      return d;
    }
    return AttackDecision{AttackVector{a_y, a_u}, true};
  };
}

DetectorPolicy trained_detector_policy(const DdpgAgent& detector, const AgentSpaces& spaces) {
  return [&detector, spaces](const DetectorView& view, Rng& rng) {
    const Eigen::VectorXd obs = spaces.detector_obs(view.r, view.y);
    return spaces.decode_detector(detector.act(obs, false, rng));
  };
}

ControlPolicy switched_control_policy(const DdpgAgent* controller, const AgentSpaces& spaces,
                                      const Box& X_R, const Box& X_S) {
  return [controller, spaces, X_R, X_S](const ControlView& view, Rng& rng) {
    const bool condition =
        view.alarm_prev && X_S.contains(view.x_hat) && !X_R.contains(view.x_hat);
    if (!condition || controller == nullptr) return ControlDecision{view.u_default, false};
    const Eigen::VectorXd obs = spaces.controller_obs(view.y_prev);
    const Eigen::VectorXd action = controller->act(obs, false, rng);
    return ControlDecision{spaces.decode_control(action), true};
  };
}

EpisodeResult online_monitor(const SystemModel& model, const AgentSpaces& spaces,
                             const MonitorSetup& setup, const MonitorOptions& opts,
                             const Box& X_R, const Box& X_S) {
  if (!setup.detector && !setup.const_detector)
    throw UsageError("online_monitor: need a trained detector or a constant baseline");

  DetectorPolicy detector =
      setup.detector ? trained_detector_policy(*setup.detector, spaces)
                     : constant_detector_policy(setup.const_detector->Th, setup.const_detector->l);
  ControlPolicy control = switched_control_policy(setup.controller, spaces, X_R, X_S);
  AttackPolicy attack = setup.attack ? setup.attack : zero_attack_policy();

  SimOptions sim_opts;
  sim_opts.steps = opts.steps;
  sim_opts.seed = opts.seed;
  sim_opts.x0 = opts.x0;

  EpisodeResult res;
  res.trace = simulate(model, sim_opts, attack, detector, control);

  int onset = -1;
  bool alarmed_excursion = false;
  for (std::size_t i = 0; i < res.trace.rows.size(); ++i) {
    const TraceRow& row = res.trace.rows[i];
    if (row.attack_active) {
      ++res.attacked_steps;
      if (onset < 0) onset = row.state.k;
    } else {
      ++res.unattacked_steps;
    }
    if (row.alarm) {
      ++res.total_alarms;
      if (row.attack_active) {
        ++res.detections;
        if (onset >= 0 && !res.detection_latency) res.detection_latency = row.state.k - onset;
      } else {
        ++res.false_alarms;
      }
    }
    if (row.alarm && !X_R.contains(row.state.x_hat)) alarmed_excursion = true;
    if (alarmed_excursion && !res.returned_to_XR_step && X_R.contains(row.state.x_hat))
      res.returned_to_XR_step = row.state.k;
    if (!X_S.contains(row.state.x)) res.safety_violated = true;
  }
  if (res.trace.diverged) res.safety_violated = true;
  return res;
}

}  // namespace fdimon
