#include "fdimon/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "fdimon/chi2.hpp"
#include "fdimon/errors.hpp"
#include "json.hpp"

namespace fdimon {

const char* const kToolVersion = "fdimon 0.1.0";

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& why) {
  throw ConfigError("config field '" + field + "': " + why);
}

void reject_unknown(const json& obj, const std::string& scope,
                    const std::set<std::string>& allowed) {
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key))
      throw ConfigError("config: unknown key '" + scope + key + "'");
  }
}

Eigen::MatrixXd parse_matrix(const json& j, const std::string& field) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) fail(field, "expected a nested numeric list");
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].size();
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) fail(field, "ragged matrix rows");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) fail(field, "non-numeric entry");
      m(r, c) = j[r][c].get<double>();
    }
  }
  return m;
}

Eigen::VectorXd parse_vector(const json& j, const std::string& field) {
  if (!j.is_array() || j.empty()) fail(field, "expected a numeric list");
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) fail(field, "non-numeric entry");
    v(i) = j[i].get<double>();
  }
  return v;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

double get_num(const json& obj, const std::string& scope, const std::string& key,
               double fallback, std::vector<std::string>& defaults) {
  if (obj.contains(key)) {
    if (!obj[key].is_number()) fail(scope + key, "expected a number");
    return obj[key].get<double>();
  }
  defaults.push_back(scope + key);
  return fallback;
}

int get_int(const json& obj, const std::string& scope, const std::string& key, int fallback,
            std::vector<std::string>& defaults) {
  if (obj.contains(key)) {
    if (!obj[key].is_number_integer()) fail(scope + key, "expected an integer");
    return obj[key].get<int>();
  }
  defaults.push_back(scope + key);
  return fallback;
}

}  // namespace

AgentSpaces BenchmarkConfig::make_spaces() const {
  const Eigen::MatrixXd Sigma_r = residue_cov(model);
  return AgentSpaces::build(model, safe_region, Sigma_r, eps_y, eps_u, detector.Th_min,
                            detector.Th_max, detector.l_max);
}

BenchmarkConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path);
}

BenchmarkConfig parse_config(const std::string& text, const std::string& origin) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& err) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < err.byte && i < text.size(); ++i)
      if (text[i] == '\n') ++line;
    throw ConfigError(origin + ":" + std::to_string(line) + ": " + err.what());
  }
  if (!root.is_object()) throw ConfigError(origin + ": top level must be an object");

  reject_unknown(root, "", {"seed", "system", "safe_region", "region_synth", "detector",
                            "rewards", "ddpg", "training", "attack"});
  std::vector<std::string> defaults;

  if (!root.contains("system")) fail("system", "required section missing");
  const json& sys = root["system"];
  reject_unknown(sys, "system.", {"A", "B", "C", "D", "K", "L", "Sigma_w", "Sigma_v",
                                  "x0_mean", "Sigma_0", "h"});
  for (const char* req : {"A", "B", "C", "K", "L", "h"})
    if (!sys.contains(req)) fail(std::string("system.") + req, "required field missing");

  const Eigen::MatrixXd A = parse_matrix(sys["A"], "system.A");
  const Eigen::MatrixXd B = parse_matrix(sys["B"], "system.B");
  const Eigen::MatrixXd C = parse_matrix(sys["C"], "system.C");
  const Eigen::MatrixXd K = parse_matrix(sys["K"], "system.K");
  const Eigen::MatrixXd L = parse_matrix(sys["L"], "system.L");
  const int n = static_cast<int>(A.rows());
  const int m = static_cast<int>(C.rows());
  const int p = static_cast<int>(B.cols());
  if (!sys["h"].is_number()) fail("system.h", "expected a number");
  const double h = sys["h"].get<double>();

  Eigen::MatrixXd D;
  if (sys.contains("D")) {
    D = parse_matrix(sys["D"], "system.D");
  } else {
    D = Eigen::MatrixXd::Zero(m, p);
    defaults.push_back("system.D");
  }
  Eigen::MatrixXd Sigma_w;
  if (sys.contains("Sigma_w")) {
    Sigma_w = parse_matrix(sys["Sigma_w"], "system.Sigma_w");
  } else {
    Sigma_w = 1e-4 * Eigen::MatrixXd::Identity(n, n);
    defaults.push_back("system.Sigma_w");
  }
  Eigen::MatrixXd Sigma_v;
  if (sys.contains("Sigma_v")) {
    Sigma_v = parse_matrix(sys["Sigma_v"], "system.Sigma_v");
  } else {
    Sigma_v = 1e-4 * Eigen::MatrixXd::Identity(m, m);
    defaults.push_back("system.Sigma_v");
  }
  Eigen::VectorXd x0_mean;
  if (sys.contains("x0_mean")) {
    x0_mean = parse_vector(sys["x0_mean"], "system.x0_mean");
  } else {
    x0_mean = Eigen::VectorXd::Zero(n);
    defaults.push_back("system.x0_mean");
  }
  Eigen::MatrixXd Sigma_0;
  if (sys.contains("Sigma_0")) {
    Sigma_0 = parse_matrix(sys["Sigma_0"], "system.Sigma_0");
  } else {
    Sigma_0 = Eigen::MatrixXd::Zero(n, n);
    defaults.push_back("system.Sigma_0");
  }

  if (!root.contains("safe_region")) fail("safe_region", "required section missing");
  const json& sr = root["safe_region"];
  reject_unknown(sr, "safe_region.", {"lo", "hi"});
  if (!sr.contains("lo") || !sr.contains("hi")) fail("safe_region", "needs lo and hi");
  const Eigen::VectorXd xs_lo = parse_vector(sr["lo"], "safe_region.lo");
  const Eigen::VectorXd xs_hi = parse_vector(sr["hi"], "safe_region.hi");
  if (xs_lo.size() != n) fail("safe_region.lo", "dimension does not match the state");

  // SystemModel and Box constructors enforce the module invariants.
  SystemModel model(A, B, C, D, K, L, Sigma_w, Sigma_v, x0_mean, Sigma_0, h);
  Box X_S(xs_lo, xs_hi);

  // The benchmark pipeline needs Sigma_r^{-1}; require Sigma_v PD here.
  {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Sigma_v);
    if (es.eigenvalues().minCoeff() <= 0.0)
      fail("system.Sigma_v", "must be positive definite (Sigma_r inverse required)");
  }

  BenchmarkConfig cfg{model, X_S, {}, {}, {}, {}, {}, {}, {}, 1, {}, "", ""};

  const json region = root.contains("region_synth") ? root["region_synth"] : json::object();
  if (!root.contains("region_synth")) defaults.push_back("region_synth");
  reject_unknown(region, "region_synth.", {"steps", "depth_step", "sigma_mult"});
  cfg.region.steps = get_int(region, "region_synth.", "steps", 50, defaults);
  cfg.region.depth_step = get_num(region, "region_synth.", "depth_step", 0.1, defaults);
  cfg.region.sigma_mult = get_num(region, "region_synth.", "sigma_mult", 3.0, defaults);
  if (cfg.region.steps < 1) fail("region_synth.steps", "must be >= 1");
  if (!(cfg.region.depth_step > 0.0 && cfg.region.depth_step < 1.0))
    fail("region_synth.depth_step", "must be in (0, 1)");
  if (!(cfg.region.sigma_mult > 0.0)) fail("region_synth.sigma_mult", "must be positive");

  const json det = root.contains("detector") ? root["detector"] : json::object();
  if (!root.contains("detector")) defaults.push_back("detector");
  reject_unknown(det, "detector.", {"l_max", "Th_min", "Th_max", "epsilon"});
  cfg.detector.l_max = get_int(det, "detector.", "l_max", 10, defaults);
  cfg.detector.Th_min = get_num(det, "detector.", "Th_min", 0.5, defaults);
  cfg.detector.Th_max = get_num(det, "detector.", "Th_max", 50.0, defaults);
  cfg.detector.epsilon = get_num(det, "detector.", "epsilon", 0.05, defaults);
  if (cfg.detector.l_max < 1) fail("detector.l_max", "must be >= 1");
  if (!(cfg.detector.Th_min > 0.0 && cfg.detector.Th_min < cfg.detector.Th_max))
    fail("detector.Th_min", "need 0 < Th_min < Th_max");
  if (!(cfg.detector.epsilon > 0.0 && cfg.detector.epsilon < 1.0))
    fail("detector.epsilon", "must be in (0, 1)");

  const json rew = root.contains("rewards") ? root["rewards"] : json::object();
  if (!root.contains("rewards")) defaults.push_back("rewards");
  reject_unknown(rew, "rewards.", {"w1", "w2", "W3", "far_penalty", "exit_bonus", "exit_penalty"});
  cfg.rewards.w1 = get_num(rew, "rewards.", "w1", 1.0, defaults);
  cfg.rewards.w2 = get_num(rew, "rewards.", "w2", 1.0, defaults);
  if (!(cfg.rewards.w1 >= 0.0 && cfg.rewards.w1 <= 1.0)) fail("rewards.w1", "must be in [0, 1]");
  if (!(cfg.rewards.w2 >= 0.0 && cfg.rewards.w2 <= 1.0)) fail("rewards.w2", "must be in [0, 1]");
  if (cfg.rewards.w1 + cfg.rewards.w2 <= 0.0) fail("rewards.w1", "w1 + w2 must be positive");
  if (rew.contains("W3")) {
    cfg.rewards.W3 = parse_vector(rew["W3"], "rewards.W3");
    if (cfg.rewards.W3.size() != n) fail("rewards.W3", "dimension does not match the state");
  } else {
    cfg.rewards.W3.resize(n);
    for (int j = 0; j < n; ++j) {
      const double S = std::max(std::abs(xs_lo(j)), std::abs(xs_hi(j)));
      cfg.rewards.W3(j) = 1.0 / (S * S);
    }
    defaults.push_back("rewards.W3");
  }
  for (int j = 0; j < n; ++j)
    if (!(cfg.rewards.W3(j) > 0.0)) fail("rewards.W3", "entries must be positive");
  cfg.rewards.epsilon = cfg.detector.epsilon;
  cfg.rewards.far_penalty = get_num(rew, "rewards.", "far_penalty", 1.0, defaults);
  cfg.rewards.exit_bonus = get_num(rew, "rewards.", "exit_bonus", 50.0, defaults);
  cfg.rewards.exit_penalty = get_num(rew, "rewards.", "exit_penalty", 100.0, defaults);

  const json ddpg = root.contains("ddpg") ? root["ddpg"] : json::object();
  if (!root.contains("ddpg")) defaults.push_back("ddpg");
  reject_unknown(ddpg, "ddpg.", {"hidden", "critic_lr", "actor_lr", "gamma", "tau",
                                 "buffer_capacity", "batch_size", "noise_frac_initial",
                                 "noise_frac_final"});
  if (ddpg.contains("hidden")) {
    const Eigen::VectorXd hid = parse_vector(ddpg["hidden"], "ddpg.hidden");
    if (hid.size() != 3) fail("ddpg.hidden", "expected exactly 3 hidden widths");
    for (int i = 0; i < 3; ++i) {
      if (hid(i) < 1) fail("ddpg.hidden", "widths must be positive");
      cfg.ddpg.hidden[i] = static_cast<int>(hid(i));
    }
  } else {
    defaults.push_back("ddpg.hidden");
  }
  cfg.ddpg.critic_lr = get_num(ddpg, "ddpg.", "critic_lr", 1e-3, defaults);
  cfg.ddpg.actor_lr = get_num(ddpg, "ddpg.", "actor_lr", 1e-4, defaults);
  cfg.ddpg.gamma = get_num(ddpg, "ddpg.", "gamma", 0.99, defaults);
  cfg.ddpg.tau = get_num(ddpg, "ddpg.", "tau", 0.005, defaults);
  cfg.ddpg.buffer_capacity =
      static_cast<std::size_t>(get_num(ddpg, "ddpg.", "buffer_capacity", 100000, defaults));
  cfg.ddpg.batch_size = get_int(ddpg, "ddpg.", "batch_size", 64, defaults);
  cfg.ddpg.noise_frac_initial = get_num(ddpg, "ddpg.", "noise_frac_initial", 0.1, defaults);
  cfg.ddpg.noise_frac_final = get_num(ddpg, "ddpg.", "noise_frac_final", 0.01, defaults);
  if (!(cfg.ddpg.gamma >= 0.0 && cfg.ddpg.gamma < 1.0)) fail("ddpg.gamma", "must be in [0, 1)");
  if (!(cfg.ddpg.tau > 0.0 && cfg.ddpg.tau <= 1.0)) fail("ddpg.tau", "must be in (0, 1]");
  if (cfg.ddpg.batch_size < 1) fail("ddpg.batch_size", "must be >= 1");
  if (cfg.ddpg.buffer_capacity < static_cast<std::size_t>(cfg.ddpg.batch_size))
    fail("ddpg.buffer_capacity", "must be >= batch_size");

  const json tr = root.contains("training") ? root["training"] : json::object();
  if (!root.contains("training")) defaults.push_back("training");
  reject_unknown(tr, "training.", {"episodes", "steps_per_episode", "rollouts_per_episode",
                                   "attack_episodes", "attack_onset_max", "checkpoint_every",
                                   "detector_updates_per_step"});
  cfg.training.episodes = get_int(tr, "training.", "episodes", 3000, defaults);
  cfg.training.steps_per_episode = get_int(tr, "training.", "steps_per_episode", 100, defaults);
  cfg.training.rollouts_per_episode =
      get_int(tr, "training.", "rollouts_per_episode", 1, defaults);
  cfg.training.attack_onset_max = get_int(tr, "training.", "attack_onset_max", 50, defaults);
  cfg.training.checkpoint_every = get_int(tr, "training.", "checkpoint_every", 100, defaults);
  cfg.training.detector_updates_per_step =
      get_int(tr, "training.", "detector_updates_per_step", 2, defaults);
  if (cfg.training.detector_updates_per_step < 1)
    fail("training.detector_updates_per_step", "must be >= 1");
  if (cfg.training.episodes < 0) fail("training.episodes", "must be >= 0");
  if (cfg.training.steps_per_episode < 1) fail("training.steps_per_episode", "must be >= 1");
  if (cfg.training.rollouts_per_episode < 1)
    fail("training.rollouts_per_episode", "must be >= 1");
  if (cfg.training.attack_onset_max < 0) fail("training.attack_onset_max", "must be >= 0");
  std::string mode = "alternate";
  if (tr.contains("attack_episodes")) {
    if (!tr["attack_episodes"].is_string()) fail("training.attack_episodes", "expected a string");
    mode = tr["attack_episodes"].get<std::string>();
  } else {
    defaults.push_back("training.attack_episodes");
  }
  if (mode == "alternate") cfg.training.attack_mode = AttackScheduleMode::Alternate;
  else if (mode == "none") cfg.training.attack_mode = AttackScheduleMode::None;
  else if (mode == "all") cfg.training.attack_mode = AttackScheduleMode::All;
  else fail("training.attack_episodes", "must be one of alternate|none|all");

  const json atk = root.contains("attack") ? root["attack"] : json::object();
  if (!root.contains("attack")) defaults.push_back("attack");
  reject_unknown(atk, "attack.", {"eps_y", "eps_u"});
  if (atk.contains("eps_y")) {
    cfg.eps_y = parse_vector(atk["eps_y"], "attack.eps_y");
    if (cfg.eps_y.size() != m) fail("attack.eps_y", "dimension does not match outputs");
  } else {
    // Default sensor-attack range: the X_S image under C.
    cfg.eps_y.resize(m);
    for (int j = 0; j < m; ++j) {
      double acc = 0.0;
      for (int d = 0; d < n; ++d)
        acc += std::abs(C(j, d)) * std::max(std::abs(xs_lo(d)), std::abs(xs_hi(d)));
      cfg.eps_y(j) = acc > 0.0 ? acc : 1.0;
    }
    defaults.push_back("attack.eps_y");
  }
  if (atk.contains("eps_u")) {
    cfg.eps_u = parse_vector(atk["eps_u"], "attack.eps_u");
    if (cfg.eps_u.size() != p) fail("attack.eps_u", "dimension does not match inputs");
  } else {
    cfg.eps_u = 20.0 * Eigen::VectorXd::Ones(p);
    defaults.push_back("attack.eps_u");
  }
  for (int j = 0; j < m; ++j)
    if (!(cfg.eps_y(j) > 0.0)) fail("attack.eps_y", "entries must be positive");
  for (int j = 0; j < p; ++j)
    if (!(cfg.eps_u(j) > 0.0)) fail("attack.eps_u", "entries must be positive");

  if (root.contains("seed")) {
    if (!root["seed"].is_number_unsigned() && !root["seed"].is_number_integer())
      fail("seed", "expected an integer");
    cfg.seed = root["seed"].get<std::uint64_t>();
  } else {
    cfg.seed = 1;
    defaults.push_back("seed");
  }

  cfg.applied_defaults = std::move(defaults);

  // Canonical serialization of the effective (post-default) config; nlohmann
  // objects are key-sorted, so the dump is stable.
  json canon;
  canon["seed"] = cfg.seed;
  canon["system"] = {
      {"A", matrix_to_json(cfg.model.A)},       {"B", matrix_to_json(cfg.model.B)},
      {"C", matrix_to_json(cfg.model.C)},       {"D", matrix_to_json(cfg.model.D)},
      {"K", matrix_to_json(cfg.model.K)},       {"L", matrix_to_json(cfg.model.L)},
      {"Sigma_w", matrix_to_json(cfg.model.Sigma_w)},
      {"Sigma_v", matrix_to_json(cfg.model.Sigma_v)},
      {"x0_mean", vector_to_json(cfg.model.x0_mean)},
      {"Sigma_0", matrix_to_json(cfg.model.Sigma_0)},
      {"h", cfg.model.h}};
  canon["safe_region"] = {{"lo", vector_to_json(cfg.safe_region.lo)},
                          {"hi", vector_to_json(cfg.safe_region.hi)}};
  canon["region_synth"] = {{"steps", cfg.region.steps},
                           {"depth_step", cfg.region.depth_step},
                           {"sigma_mult", cfg.region.sigma_mult}};
  canon["detector"] = {{"l_max", cfg.detector.l_max},
                       {"Th_min", cfg.detector.Th_min},
                       {"Th_max", cfg.detector.Th_max},
                       {"epsilon", cfg.detector.epsilon}};
  canon["rewards"] = {{"w1", cfg.rewards.w1},
                      {"w2", cfg.rewards.w2},
                      {"W3", vector_to_json(cfg.rewards.W3)},
                      {"far_penalty", cfg.rewards.far_penalty},
                      {"exit_bonus", cfg.rewards.exit_bonus},
                      {"exit_penalty", cfg.rewards.exit_penalty}};
  canon["ddpg"] = {{"hidden", {cfg.ddpg.hidden[0], cfg.ddpg.hidden[1], cfg.ddpg.hidden[2]}},
                   {"critic_lr", cfg.ddpg.critic_lr},
                   {"actor_lr", cfg.ddpg.actor_lr},
                   {"gamma", cfg.ddpg.gamma},
                   {"tau", cfg.ddpg.tau},
                   {"buffer_capacity", cfg.ddpg.buffer_capacity},
                   {"batch_size", cfg.ddpg.batch_size},
                   {"noise_frac_initial", cfg.ddpg.noise_frac_initial},
                   {"noise_frac_final", cfg.ddpg.noise_frac_final}};
  canon["training"] = {{"episodes", cfg.training.episodes},
                       {"steps_per_episode", cfg.training.steps_per_episode},
                       {"rollouts_per_episode", cfg.training.rollouts_per_episode},
                       {"attack_episodes", mode},
                       {"attack_onset_max", cfg.training.attack_onset_max},
                       {"checkpoint_every", cfg.training.checkpoint_every},
                       {"detector_updates_per_step", cfg.training.detector_updates_per_step}};
  canon["attack"] = {{"eps_y", vector_to_json(cfg.eps_y)}, {"eps_u", vector_to_json(cfg.eps_u)}};
  cfg.canonical = canon.dump();
  cfg.hash = config_hash(cfg.canonical);
  return cfg;
}

std::string config_hash(const std::string& canonical) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace fdimon
