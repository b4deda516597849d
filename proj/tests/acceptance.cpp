// Acceptance suite: runs every benchmark-level criterion end to end against
// the shipped TTC configuration and prints one PASS/FAIL line per criterion.
//
// Usage: fdimon_acceptance --cli <path-to-fdimon> --config <ttc.json> --workdir <dir>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "fdimon/chi2.hpp"
#include "fdimon/config.hpp"
#include "fdimon/ddpg.hpp"
#include "fdimon/env.hpp"
#include "fdimon/region.hpp"
#include "fdimon/trace_io.hpp"

namespace fs = std::filesystem;
using namespace fdimon;

namespace {

struct Outcome {
  int id;
  std::string name;
  bool pass;
  std::string detail;
};

std::vector<Outcome> g_outcomes;
std::string cfg_path_for_cli;  // set in main

void record(int id, const std::string& name, bool pass, const std::string& detail) {
  g_outcomes.push_back({id, name, pass, detail});
  std::cout << (pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name
            << "): " << detail << "\n"
            << std::flush;
}

int run_cmd(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  if (status < 0) return -1;
  return WEXITSTATUS(status);
}

double elapsed_s(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double chi2_cdf_even_dof_oracle(int dof, double x) {
  const int s = dof / 2;
  const double half = 0.5 * x;
  double term = 1.0, sum = 1.0;
  for (int j = 1; j < s; ++j) {
    term *= half / j;
    sum += term;
  }
  return 1.0 - std::exp(-half) * sum;
}

double ks_statistic(std::vector<double> samples, int dof) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = chi2_cdf(dof, samples[i]);
    d = std::max(d, std::max(f - i / n, (i + 1) / n - f));
  }
  return d;
}

std::uint64_t evaluate_episode_seed(std::uint64_t master, int index) {
  return splitmix64(splitmix64(master + 0xE7A1) ^ splitmix64(index));
}

// --------------------------------------------------------------------------

void criterion1_chi2_fit(const BenchmarkConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const int l = 4;
  const int windows = 10000;
  const int burn_in = 200;
  SimOptions opts;
  opts.steps = burn_in + windows * l;
  opts.seed = cfg.seed;
  opts.x0 = Eigen::VectorXd::Zero(2);
  const SimTrace trace = simulate(cfg.model, opts, zero_attack_policy(),
                                  constant_detector_policy(1e9, l), default_control_policy());
  const Eigen::MatrixXd Srinv = residue_cov(cfg.model).inverse();
  std::vector<double> g;
  g.reserve(windows);
  for (int wdx = 0; wdx < windows; ++wdx) {
    std::vector<Eigen::VectorXd> win;
    for (int i = 0; i < l; ++i)
      win.push_back(trace.rows[burn_in + wdx * l + i].state.r);
    g.push_back(chi2_statistic(win, Srinv));
  }
  const double ks = ks_statistic(g, l);
  const double secs = elapsed_s(t0);
  std::ostringstream detail;
  detail << "KS=" << ks << " (<0.05) over 10^4 disjoint l=4 windows in " << secs << "s (<30s)";
  record(1, "chi-squared distribution fit", ks < 0.05 && secs < 30.0, detail.str());
}

void criterion2_far_oracle() {
  DetectorConfig cfg;
  cfg.l = 4;
  cfg.l_max = 10;
  cfg.Th = 12.0;
  const double far12 = far(cfg, 1);
  cfg.Th = 4.0;
  const double far4 = far(cfg, 1);
  const double oracle12 = 1.0 - chi2_cdf_even_dof_oracle(4, 12.0);  // 7 e^-6
  const double oracle4 = 1.0 - chi2_cdf_even_dof_oracle(4, 4.0);    // 3 e^-2
  const double err12 = std::abs(far12 - oracle12);
  const double err4 = std::abs(far4 - oracle4);
  std::ostringstream detail;
  detail << "far(Th=12)=" << far12 << " vs 7e^-6=" << oracle12 << " (|err|=" << err12
         << "), far(Th=4)=" << far4 << " vs 3e^-2=" << oracle4 << " (|err|=" << err4 << ")";
  record(2, "analytic FAR oracle", err12 < 1e-9 && err4 < 1e-9, detail.str());
}

void criterion3_noncentral_mean(const BenchmarkConfig& cfg) {
  const int l = 4;
  const int episodes = 25000;
  const int steps = 16;  // 4 disjoint windows per episode -> 1e5 windows
  const Eigen::MatrixXd Sr = residue_cov(cfg.model);
  const Eigen::MatrixXd Srinv = Sr.inverse();
  const Eigen::VectorXd a_y = Eigen::VectorXd::Constant(1, 0.1);  // constant sensor bias

  std::vector<Eigen::VectorXd> residues;
  residues.reserve(episodes * steps);
  for (int e = 0; e < episodes; ++e) {
    SimOptions opts;
    opts.steps = steps;
    opts.seed = splitmix64(cfg.seed + 0xC3) ^ splitmix64(e);
    opts.x0 = Eigen::VectorXd::Zero(2);
    const SimTrace trace =
        simulate(cfg.model, opts, scripted_attack_policy(a_y, Eigen::VectorXd::Zero(1), 0),
                 constant_detector_policy(1e9, l), default_control_policy());
    for (const auto& row : trace.rows) residues.push_back(row.state.r);
  }

  const NoncentralParams np = estimate_noncentrality(residues, Sr, l);
  double mean_g = 0.0;
  long n_win = 0;
  for (std::size_t base = 0; base + l <= residues.size(); base += l) {
    std::vector<Eigen::VectorXd> win(residues.begin() + base, residues.begin() + base + l);
    mean_g += chi2_statistic(win, Srinv);
    ++n_win;
  }
  mean_g /= static_cast<double>(n_win);

  const bool exceeds = np.lambda > 0.0 && mean_g > l;  // m*l with m=1
  const double rel = std::abs(mean_g - np.mu) / np.mu;
  std::ostringstream detail;
  detail << "lambda_hat=" << np.lambda << ", mean(g)=" << mean_g << " over " << n_win
         << " attacked windows vs dof+lambda=" << np.mu << " (rel err " << rel << " < 0.05)";
  record(3, "noncentral mean under constant-bias attack", exceeds && rel < 0.05, detail.str());
}

void criterion4_detectability() {
  bool grid_ok = true;
  for (int dof : {2, 4, 8}) {
    for (double lambda : {0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
      for (int th = 1; th <= 40; ++th) {
        DetectorConfig cfg;
        cfg.l = dof;  // m = 1
        cfg.l_max = 64;
        cfg.Th = th;
        if (!(tpr(cfg, 1, lambda) > far(cfg, 1))) grid_ok = false;
      }
    }
  }

  // Monte Carlo oracle for the noncentral CDF, 1e7 draws per point.
  struct Point {
    int dof;
    double lambda, x;
  };
  const std::vector<Point> points = {{4, 8.0, 12.0}, {2, 4.0, 8.0}, {8, 16.0, 30.0}};
  double worst = 0.0;
  Rng rng(777001);
  for (const auto& pt : points) {
    const int N = 10000000;
    long below = 0;
    const double delta = std::sqrt(pt.lambda);
    for (int i = 0; i < N; ++i) {
      double acc = 0.0;
      for (int j = 0; j < pt.dof; ++j) {
        const double z = rng.gaussian() + (j == 0 ? delta : 0.0);
        acc += z * z;
      }
      if (acc <= pt.x) ++below;
    }
    const double mc = static_cast<double>(below) / N;
    worst = std::max(worst, std::abs(mc - noncentral_chi2_cdf(pt.dof, pt.lambda, pt.x)));
  }
  std::ostringstream detail;
  detail << "tpr>far on the full Th x lambda x dof grid: " << (grid_ok ? "yes" : "NO")
         << "; worst |cdf - MC(1e7)| = " << worst << " (<2e-3)";
  record(4, "detectability (Theorem-2 grid + MC oracle)", grid_ok && worst < 2e-3,
         detail.str());
}

void criterion5_region(const BenchmarkConfig& cfg) {
  // Documented default noise for this criterion.
  const SystemModel mdl(cfg.model.A, cfg.model.B, cfg.model.C, cfg.model.D, cfg.model.K,
                        cfg.model.L, 1e-4 * Eigen::MatrixXd::Identity(2, 2),
                        1e-4 * Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(2),
                        Eigen::MatrixXd::Zero(2, 2), cfg.model.h);
  const int steps = 50;
  const double sigma_mult = 3.0;
  const Box X_R = cfg.safe_region.scaled(0.3);
  const auto cert = is_invariant(mdl, X_R, steps, sigma_mult);

  int violations = 0;
  if (cert.verified) {
    Rng rng(424243);
    const Eigen::VectorXd bw = sigma_mult * mdl.Sigma_w.diagonal().cwiseSqrt();
    const Eigen::VectorXd bv = sigma_mult * mdl.Sigma_v.diagonal().cwiseSqrt();
    const AttackVector no_attack = AttackVector::zero(1, 1);
    for (int trial = 0; trial < 10000; ++trial) {
      SimState s;
      s.k = 0;
      s.x = X_R.sample_uniform(rng);
      s.x_hat = Eigen::VectorXd::Zero(2);
      s.u = -(mdl.K * s.x_hat);
      for (int j = 0; j < steps; ++j) {
        const Eigen::VectorXd w =
            (mdl.sqrt_w * rng.gaussian_vector(2)).cwiseMax(-bw).cwiseMin(bw);
        const Eigen::VectorXd v =
            (mdl.sqrt_v * rng.gaussian_vector(1)).cwiseMax(-bv).cwiseMin(bv);
        s = step(mdl, s, no_attack, w, v);
      }
      if (!X_R.contains(s.x)) ++violations;
    }
  }
  std::ostringstream detail;
  detail << "X_R = 0.3 X_S verified=" << (cert.verified ? "true" : "false") << "; "
         << violations << "/10000 truncated-noise rollouts left X_R at step 50 (must be 0)";
  record(5, "region synthesis at documented defaults", cert.verified && violations == 0,
         detail.str());
}

void criterion6_ddpg() {
  // Finite-difference gradient agreement on an actor-through-critic chain.
  Rng rng(31337);
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(2, -2.0);
  Eigen::VectorXd hi = Eigen::VectorXd::Constant(2, 2.0);
  Mlp actor = make_mlp(3, {16, 16, 16}, 2, OutputActivation::BoundedTanh, rng, lo, hi);
  Mlp critic = make_mlp(5, {16, 16, 16}, 1, OutputActivation::Affine, rng);
  const Eigen::VectorXd s = rng.gaussian_vector(3);
  auto objective = [&]() {
    Eigen::VectorXd mu = actor.forward(s);
    Eigen::VectorXd sa(5);
    sa << s, mu;
    return critic.forward(sa)(0);
  };
  ForwardCache ac, cc;
  const Eigen::MatrixXd mu = forward_cached(actor, s.transpose(), ac);
  Eigen::MatrixXd sa(1, 5);
  sa << s.transpose(), mu;
  forward_cached(critic, sa, cc);
  const Grads chain = backward(critic, cc, Eigen::MatrixXd::Constant(1, 1, 1.0));
  const Grads actor_g = backward(actor, ac, chain.dinput.rightCols(2));

  double worst_rel = 0.0;
  for (int layer = 0; layer < 4; ++layer) {
    for (int trial = 0; trial < 5; ++trial) {
      const int r = static_cast<int>(rng.uniform() * actor.W[layer].rows());
      const int c = static_cast<int>(rng.uniform() * actor.W[layer].cols());
      double& p = actor.W[layer](r, c);
      const double orig = p;
      const double eps = 1e-5;
      p = orig + eps;
      const double f_plus = objective();
      p = orig - eps;
      const double f_minus = objective();
      p = orig;
      const double fd = (f_plus - f_minus) / (2.0 * eps);
      const double an = actor_g.dW[layer](r, c);
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
      worst_rel = std::max(worst_rel, std::abs(fd - an) / denom);
    }
  }

  // Quadratic bandit convergence within 2000 steps.
  DdpgConfig cfg;
  cfg.hidden = {32, 32, 32};
  cfg.gamma = 0.0;
  cfg.buffer_capacity = 4096;
  cfg.batch_size = 64;
  cfg.noise_frac_final = 0.1;
  Rng init(17);
  DdpgAgent agent(1, 1, Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 1.0),
                  cfg, init);
  Rng brng(18);
  const Eigen::VectorXd obs = Eigen::VectorXd::Zero(1);
  for (int step_i = 0; step_i < 2000; ++step_i) {
    const Eigen::VectorXd a = agent.act(obs, true, brng);
    agent.buffer().push(Transition{obs, a, -(a(0) - 0.5) * (a(0) - 0.5), obs, true});
    agent.train_from_buffer(brng);
  }
  const double greedy = agent.act(obs, false, brng)(0);
  std::ostringstream detail;
  detail << "worst FD gradient rel err " << worst_rel << " (<1e-4); bandit greedy action "
         << greedy << " within 0.1 of 0.5";
  record(6, "DDPG correctness", worst_rel < 1e-4 && std::abs(greedy - 0.5) < 0.1,
         detail.str());
}

struct EvalStats {
  double tpr_step = 0.0;
  double far_step = 0.0;
  std::vector<SimTrace> traces;
};

EvalStats evaluate_scenario(const BenchmarkConfig& cfg, const AgentSpaces& spaces,
                            const Box& X_R, const DdpgAgent& detector,
                            const DdpgAgent* attacker, const DdpgAgent* controller,
                            int n_seeds, int onset = 10) {
  EvalStats out;
  long detections = 0, attacked = 0, false_alarms = 0, unattacked = 0;
  for (int i = 0; i < n_seeds; ++i) {
    MonitorSetup setup;
    setup.detector = &detector;
    setup.controller = controller;
    setup.attack = attacker ? trained_attack_policy(*attacker, spaces, onset) : AttackPolicy{};
    MonitorOptions mopts;
    mopts.steps = cfg.training.steps_per_episode;
    mopts.seed = evaluate_episode_seed(cfg.seed, i);
    Rng x0_rng(splitmix64(mopts.seed ^ 0xF00D));
    mopts.x0 = X_R.sample_uniform(x0_rng);
    EpisodeResult res = online_monitor(cfg.model, spaces, setup, mopts, X_R, cfg.safe_region);
    detections += res.detections;
    attacked += res.attacked_steps;
    false_alarms += res.false_alarms;
    unattacked += res.unattacked_steps;
    out.traces.push_back(std::move(res.trace));
  }
  out.tpr_step = attacked > 0 ? static_cast<double>(detections) / attacked : 0.0;
  out.far_step = unattacked > 0 ? static_cast<double>(false_alarms) / unattacked : 0.0;
  return out;
}

// Best constant-threshold detector with analytic FAR <= epsilon, replayed on
// the recorded residues of the given traces.
double best_constant_tpr(const BenchmarkConfig& cfg, const std::vector<SimTrace>& traces) {
  const Eigen::MatrixXd Srinv = residue_cov(cfg.model).inverse();
  double best = 0.0;
  for (int l = 1; l <= cfg.detector.l_max; ++l) {
    for (double Th = 0.5; Th <= cfg.detector.Th_max + 1e-9; Th += 0.5) {
      DetectorConfig dc;
      dc.l = l;
      dc.l_max = cfg.detector.l_max;
      dc.Th = Th;
      if (far(dc, 1) > cfg.detector.epsilon) continue;
      long detections = 0, attacked = 0;
      for (const SimTrace& trace : traces) {
        std::vector<Eigen::VectorXd> window;
        for (const TraceRow& row : trace.rows) {
          window.push_back(row.state.r);
          if (static_cast<int>(window.size()) > l) window.erase(window.begin());
          const double g = chi2_statistic(window, Srinv);
          if (row.attack_active) {
            ++attacked;
            if (g > Th) ++detections;
          }
        }
      }
      if (attacked > 0)
        best = std::max(best, static_cast<double>(detections) / attacked);
    }
  }
  return best;
}

void criterion7_paper_numbers(const BenchmarkConfig& cfg, const std::string& cli,
                              const fs::path& workdir) {
  const fs::path train_dir = workdir / "training";
  fs::create_directories(train_dir);
  const auto t0 = std::chrono::steady_clock::now();
  const std::string cmd = cli + " train -c " + "\"" + cfg_path_for_cli + "\"" + " -o \"" +
                          train_dir.string() + "\" --fresh";
  const int rc = run_cmd(cmd);
  const double train_secs = elapsed_s(t0);
  if (rc != 0) {
    record(7, "paper-number reproduction", false,
           "training command failed with exit code " + std::to_string(rc));
    return;
  }

  const DdpgAgent detector =
      DdpgAgent::load_weights((train_dir / "detector.weights").string(), cfg.ddpg);
  const DdpgAgent attacker =
      DdpgAgent::load_weights((train_dir / "attacker.weights").string(), cfg.ddpg);
  const DdpgAgent controller =
      DdpgAgent::load_weights((train_dir / "controller.weights").string(), cfg.ddpg);

  const AgentSpaces spaces = cfg.make_spaces();
  const Box X_R = get_performance_region(cfg.model, cfg.safe_region, cfg.region.steps,
                                         cfg.region.depth_step, cfg.region.sigma_mult);

  const auto t1 = std::chrono::steady_clock::now();
  const EvalStats quiet = evaluate_scenario(cfg, spaces, X_R, detector, nullptr, nullptr, 100);
  const EvalStats attacked =
      evaluate_scenario(cfg, spaces, X_R, detector, &attacker, &controller, 100);
  const double const_tpr = best_constant_tpr(cfg, attacked.traces);
  const double eval_secs = elapsed_s(t1);

  const bool pass = quiet.far_step <= 0.05 && attacked.tpr_step >= 0.85 &&
                    attacked.tpr_step > const_tpr && train_secs <= 7200.0 &&
                    eval_secs <= 300.0;
  std::ostringstream detail;
  detail << "FAR(no attack)=" << quiet.far_step << " (<=0.05, paper 0.04); TPR(trained attacker)="
         << attacked.tpr_step << " (>=0.85, paper 0.91); best constant-threshold TPR="
         << const_tpr << " (adaptive must exceed strictly); train " << train_secs
         << "s (<=7200), paired eval " << eval_secs << "s (<=300)";
  record(7, "paper-number reproduction", pass, detail.str());
}

void criterion8_switching(const BenchmarkConfig& cfg, const fs::path& workdir) {
  const AgentSpaces spaces = cfg.make_spaces();
  const Box X_R = get_performance_region(cfg.model, cfg.safe_region, cfg.region.steps,
                                         cfg.region.depth_step, cfg.region.sigma_mult);
  Rng init(611);
  Eigen::VectorXd lo, hi;
  spaces.controller_bounds(lo, hi);
  DdpgAgent controller(spaces.controller_obs_dim(), spaces.p, lo, hi, cfg.ddpg, init);

  // Scripted scenario: ramping sensor bias from k = 50, alarm forced on
  // 60 <= k < 70.
  DetectorPolicy scripted_detector = [](const DetectorView& view, Rng&) {
    const bool alarm_window = view.k >= 60 && view.k < 70;
    return DetectorDecision{alarm_window ? 1e-9 : 1e9, 4};
  };
  AttackPolicy attack = [](const AttackView& view, Rng&) {
    AttackDecision d;
    d.vec = AttackVector::zero(1, 1);
    d.active = view.k >= 50;
    if (d.active) d.vec.a_y(0) = std::min(1.5 * (view.k - 49), 25.0);
    return d;
  };
  SimOptions opts;
  opts.steps = 100;
  opts.seed = 4001;
  const SimTrace trace = simulate(cfg.model, opts, attack, scripted_detector,
                                  switched_control_policy(&controller, spaces, X_R,
                                                          cfg.safe_region));

  const fs::path csv = workdir / "criterion8_trace.csv";
  fs::create_directories(workdir);
  write_trace_csv(csv.string(), trace, 2, 1, 1);
  const SimTrace back = read_trace_csv(csv.string());

  bool exact = back.rows.size() == 100;
  int agent_steps = 0;
  for (std::size_t k = 0; k < back.rows.size() && exact; ++k) {
    const TraceRow& row = back.rows[k];
    const bool alarm_prev = k > 0 && back.rows[k - 1].alarm;
    const bool condition = alarm_prev && cfg.safe_region.contains(row.state.x_hat) &&
                           !X_R.contains(row.state.x_hat);
    if (row.controller_mode != condition) exact = false;
    if (condition) {
      ++agent_steps;
    } else {
      const Eigen::VectorXd u_default = -(cfg.model.K * row.state.x_hat);
      // CSV stores 9 significant digits; compare at that resolution.
      if (std::abs(row.state.u(0) - u_default(0)) >
          1e-6 * std::max(1.0, std::abs(u_default(0))))
        exact = false;
    }
  }
  std::ostringstream detail;
  detail << "controller-agent actions on exactly the condition steps (" << agent_steps
         << " switched steps), -K x_hat elsewhere, verified from " << csv.filename().string();
  record(8, "controller switching exactness", exact && agent_steps > 0, detail.str());
}

void criterion9_determinism(const std::string& cli, const fs::path& workdir) {
  const fs::path weights = workdir / "training";
  const fs::path d1 = workdir / "det1";
  const fs::path d2 = workdir / "det2";
  fs::remove_all(d1);
  fs::remove_all(d2);
  const std::string base = cli + " evaluate -c \"" + cfg_path_for_cli + "\" -w \"" +
                           weights.string() + "\" --scenario trained-attacker --seeds 20 -o ";
  const int rc1 = run_cmd(base + "\"" + d1.string() + "\"" + " > /dev/null");
  const int rc2 = run_cmd(base + "\"" + d2.string() + "\"" + " > /dev/null");
  bool pass = rc1 == 0 && rc2 == 0;
  int compared = 0;
  if (pass) {
    for (const auto& entry : fs::directory_iterator(d1 / "traces")) {
      const fs::path other = d2 / "traces" / entry.path().filename();
      if (!fs::exists(other) || read_file(entry.path()) != read_file(other)) {
        pass = false;
        break;
      }
      ++compared;
    }
    pass = pass && compared > 0;
  }
  std::ostringstream detail;
  detail << "two cmd_evaluate runs with identical config+seed: " << compared
         << " trace CSVs byte-identical";
  record(9, "evaluate determinism", pass, detail.str());
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli, config_path, workdir_str = "acceptance_work";
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--cli") cli = argv[i + 1];
    else if (flag == "--config") config_path = argv[i + 1];
    else if (flag == "--workdir") workdir_str = argv[i + 1];
  }
  if (cli.empty() || config_path.empty()) {
    std::cerr << "usage: fdimon_acceptance --cli <fdimon> --config <ttc.json> [--workdir dir]\n";
    return 2;
  }
  cfg_path_for_cli = config_path;
  const fs::path workdir(workdir_str);
  fs::create_directories(workdir);

  const BenchmarkConfig cfg = load_config(config_path);

  criterion1_chi2_fit(cfg);
  criterion2_far_oracle();
  criterion3_noncentral_mean(cfg);
  criterion4_detectability();
  criterion5_region(cfg);
  criterion6_ddpg();
  criterion7_paper_numbers(cfg, cli, workdir);
  criterion8_switching(cfg, workdir);
  criterion9_determinism(cli, workdir);

  int failed = 0;
  for (const auto& o : g_outcomes)
    if (!o.pass) ++failed;
  std::cout << (failed == 0 ? "ALL CRITERIA PASSED" : std::to_string(failed) + " CRITERIA FAILED")
            << " (" << g_outcomes.size() << " total)\n";
  return failed == 0 ? 0 : 1;
}
