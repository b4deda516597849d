#include <algorithm>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fdimon/chi2.hpp"
#include "fdimon/config.hpp"
#include "fdimon/env.hpp"
#include "fdimon/errors.hpp"
#include "fdimon/trace_io.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fdimon;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitDomain = 2;
constexpr int kExitTrainingAbort = 3;

std::string out_dir_or_default(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("FDIMON_OUT_DIR")) return env;
  return "fdimon_out";
}

std::string timestamp_utc() {
  char buf[32];
  const std::time_t now = std::time(nullptr);
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

json box_to_json(const Box& b) {
  json lo = json::array(), hi = json::array();
  for (int i = 0; i < b.dim(); ++i) {
    lo.push_back(b.lo(i));
    hi.push_back(b.hi(i));
  }
  return json{{"lo", lo}, {"hi", hi}};
}

json certificate_to_json(const InvarianceCertificate& cert) {
  json j;
  j["region"] = box_to_json(cert.region);
  j["steps"] = cert.steps;
  j["noise_bound_sigmas"] = cert.noise_bound_sigmas;
  j["verified"] = cert.verified;
  if (cert.counterexample) {
    const auto& cx = *cert.counterexample;
    json x0 = json::array();
    for (int i = 0; i < cx.x0.size(); ++i) x0.push_back(cx.x0(i));
    json w_seq = json::array(), v_seq = json::array();
    for (const auto& w : cx.w_seq) {
      json row = json::array();
      for (int i = 0; i < w.size(); ++i) row.push_back(w(i));
      w_seq.push_back(row);
    }
    for (const auto& v : cx.v_seq) {
      json row = json::array();
      for (int i = 0; i < v.size(); ++i) row.push_back(v(i));
      v_seq.push_back(row);
    }
    j["counterexample"] = {{"x0", x0},
                           {"coord", cx.coord},
                           {"violation", cx.violation},
                           {"w_seq", w_seq},
                           {"v_seq", v_seq}};
  }
  return j;
}

std::uint64_t evaluate_episode_seed(std::uint64_t master, int index) {
  return splitmix64(splitmix64(master + 0xE7A1) ^ splitmix64(index));
}

int cmd_synth_region(const BenchmarkConfig& cfg, const std::string& out_dir) {
  const Box region = get_performance_region(cfg.model, cfg.safe_region, cfg.region.steps,
                                            cfg.region.depth_step, cfg.region.sigma_mult);
  const auto cert =
      is_invariant(cfg.model, region, cfg.region.steps, cfg.region.sigma_mult);
  const double depth = region.hi(0) / cfg.safe_region.hi(0);

  fs::create_directories(out_dir);
  json j = certificate_to_json(cert);
  j["depth"] = depth;
  j["config_hash"] = cfg.hash;
  j["tool_version"] = kToolVersion;
  std::ofstream out(fs::path(out_dir) / "region_certificate.json");
  out << j.dump(2) << "\n";

  std::cout << "preferable operating region: depth " << format_g9(depth) << " of X_S\n";
  for (int i = 0; i < region.dim(); ++i)
    std::cout << "  dim " << i << ": [" << format_g9(region.lo(i)) << ", "
              << format_g9(region.hi(i)) << "]\n";
  std::cout << "certificate: " << (fs::path(out_dir) / "region_certificate.json").string()
            << "\n";
  return kExitOk;
}

int cmd_train(const BenchmarkConfig& cfg, const std::string& out_dir, bool fresh,
              bool verbose) {
  fs::create_directories(out_dir);
  const Box X_R = get_performance_region(cfg.model, cfg.safe_region, cfg.region.steps,
                                         cfg.region.depth_step, cfg.region.sigma_mult);
  const AgentSpaces spaces = cfg.make_spaces();

  MultiAgentSystem agents = MultiAgentSystem::create(spaces, cfg.ddpg, cfg.seed);
  TrainOptions opts;
  opts.schedule = cfg.training;
  opts.master_seed = cfg.seed;
  opts.checkpoint_path = (fs::path(out_dir) / "checkpoint.bin").string();
  opts.verbose = verbose;
  if (fresh) fs::remove(opts.checkpoint_path);

  RewardSpec rewards = cfg.rewards;
  TrainResult result;
  try {
    result = train_multi_agent(cfg.model, spaces, rewards, X_R, cfg.safe_region, agents, opts);
  } catch (const TrainingAbort& err) {
    std::cerr << "training aborted: " << err.what() << "\n";
    const auto snap = fs::path(out_dir) / "diagnostic_snapshot";
    fs::create_directories(snap);
    agents.attacker.save_weights((snap / "attacker.weights").string(), "attacker", cfg.seed);
    agents.detector.save_weights((snap / "detector.weights").string(), "detector", cfg.seed);
    agents.controller.save_weights((snap / "controller.weights").string(), "controller",
                                   cfg.seed);
    std::ofstream msg(snap / "abort_reason.txt");
    msg << err.what() << "\n";
    return kExitTrainingAbort;
  }

  agents.attacker.save_weights((fs::path(out_dir) / "attacker.weights").string(), "attacker",
                               cfg.seed);
  agents.detector.save_weights((fs::path(out_dir) / "detector.weights").string(), "detector",
                               cfg.seed);
  agents.controller.save_weights((fs::path(out_dir) / "controller.weights").string(),
                                 "controller", cfg.seed);

  // A resumed run appends to the already-written log rows.
  const auto log_path = fs::path(out_dir) / "training_log.csv";
  std::vector<EpisodeLog> full_log;
  if (result.start_episode > 0 && fs::exists(log_path)) {
    full_log = read_training_log_csv(log_path.string());
    full_log.resize(std::min<std::size_t>(full_log.size(), result.start_episode));
  }
  full_log.insert(full_log.end(), result.log.begin(), result.log.end());
  write_training_log_csv(log_path.string(), full_log);

  std::cout << "trained " << cfg.training.episodes << " episodes; weights and log in "
            << out_dir << "\n";
  if (!full_log.empty()) {
    const auto& last = full_log.back();
    std::cout << "final episode: detector_return " << format_g9(last.detector_return)
              << ", empirical TPR " << format_g9(last.empirical_tpr) << ", empirical FAR "
              << format_g9(last.empirical_far) << "\n";
  }
  return kExitOk;
}

struct ScenarioStats {
  long detections = 0, false_alarms = 0, attacked = 0, unattacked = 0, alarms = 0;
  long safety_violations = 0;
  std::vector<int> latencies;
};

int cmd_evaluate(const BenchmarkConfig& cfg, const std::string& weights_dir,
                 const std::string& out_dir, const std::string& scenario, int n_seeds,
                 double baseline_th, int baseline_l, int onset) {
  const AgentSpaces spaces = cfg.make_spaces();
  const Box X_R = get_performance_region(cfg.model, cfg.safe_region, cfg.region.steps,
                                         cfg.region.depth_step, cfg.region.sigma_mult);

  DdpgAgent detector = DdpgAgent::load_weights(
      (fs::path(weights_dir) / "detector.weights").string(), cfg.ddpg);
  DdpgAgent attacker = DdpgAgent::load_weights(
      (fs::path(weights_dir) / "attacker.weights").string(), cfg.ddpg);
  DdpgAgent controller = DdpgAgent::load_weights(
      (fs::path(weights_dir) / "controller.weights").string(), cfg.ddpg);
  if (detector.obs_dim() != spaces.detector_obs_dim() ||
      attacker.obs_dim() != spaces.attacker_obs_dim() ||
      controller.obs_dim() != spaces.controller_obs_dim())
    throw ConfigError("evaluate: weight shapes do not match the config");

  const auto traces_dir = fs::path(out_dir) / "traces";
  fs::create_directories(traces_dir);

  ScenarioStats stats;
  for (int i = 0; i < n_seeds; ++i) {
    MonitorSetup setup;
    setup.controller = &controller;
    if (scenario == "no-attack") {
      setup.detector = &detector;
      setup.attack = zero_attack_policy();
    } else if (scenario == "trained-attacker") {
      setup.detector = &detector;
      setup.attack = trained_attack_policy(attacker, spaces, onset);
    } else if (scenario == "scripted-attack") {
      setup.detector = &detector;
      // Constant actuation bias at half the saturation range.
      setup.attack = scripted_attack_policy(Eigen::VectorXd::Zero(spaces.m),
                                            0.5 * spaces.eps_u, onset);
    } else if (scenario == "constant-threshold-baseline") {
      setup.const_detector = DetectorDecision{baseline_th, baseline_l};
      setup.attack = trained_attack_policy(attacker, spaces, onset);
    } else {
      throw UsageError("evaluate: unknown scenario '" + scenario + "'");
    }

    MonitorOptions mopts;
    mopts.steps = cfg.training.steps_per_episode;
    mopts.seed = evaluate_episode_seed(cfg.seed, i);
    Rng x0_rng(splitmix64(mopts.seed ^ 0xF00D));
    mopts.x0 = X_R.sample_uniform(x0_rng);

    const EpisodeResult res = online_monitor(cfg.model, spaces, setup, mopts, X_R,
                                             cfg.safe_region);
    stats.detections += res.detections;
    stats.false_alarms += res.false_alarms;
    stats.attacked += res.attacked_steps;
    stats.unattacked += res.unattacked_steps;
    stats.alarms += res.total_alarms;
    if (res.safety_violated) ++stats.safety_violations;
    if (res.detection_latency) stats.latencies.push_back(*res.detection_latency);

    char name[64];
    std::snprintf(name, sizeof(name), "%s_seed%03d.csv", scenario.c_str(), i);
    write_trace_csv((traces_dir / name).string(), res.trace, spaces.n, spaces.m, spaces.p);
  }

  const double tpr_step =
      stats.attacked > 0 ? static_cast<double>(stats.detections) / stats.attacked : 0.0;
  const double far_step =
      stats.unattacked > 0 ? static_cast<double>(stats.false_alarms) / stats.unattacked : 0.0;
  const double far_alarm =
      stats.alarms > 0 ? static_cast<double>(stats.false_alarms) / stats.alarms : 0.0;
  double mean_latency = 0.0;
  for (int lat : stats.latencies) mean_latency += lat;
  if (!stats.latencies.empty()) mean_latency /= static_cast<double>(stats.latencies.size());

  json report;
  report["generated_at"] = timestamp_utc();  // header only; traces stay byte-stable
  report["tool_version"] = kToolVersion;
  report["config_hash"] = cfg.hash;
  report["seed"] = cfg.seed;
  report["scenario"] = scenario;
  report["episodes"] = n_seeds;
  report["steps_per_episode"] = cfg.training.steps_per_episode;
  report["attack_onset"] = onset;
  report["tpr_per_step"] = tpr_step;
  report["far_per_step"] = far_step;
  report["far_per_alarm"] = far_alarm;
  report["mean_detection_latency"] = mean_latency;
  report["detected_episodes"] = static_cast<int>(stats.latencies.size());
  report["safety_violations"] = stats.safety_violations;
  report["region"] = box_to_json(X_R);
  report["applied_defaults"] = cfg.applied_defaults;
  if (scenario == "constant-threshold-baseline") {
    report["baseline_Th"] = baseline_th;
    report["baseline_l"] = baseline_l;
  }
  std::ofstream out(fs::path(out_dir) / ("report_" + scenario + ".json"));
  out << report.dump(2) << "\n";

  std::cout << "scenario " << scenario << " over " << n_seeds << " episodes:\n"
            << "  per-step TPR " << format_g9(tpr_step) << ", per-step FAR "
            << format_g9(far_step) << ", per-alarm FAR " << format_g9(far_alarm) << "\n"
            << "  mean detection latency " << format_g9(mean_latency) << " steps, safety violations "
            << stats.safety_violations << "\n";
  return kExitOk;
}

int cmd_report(const std::string& traces_dir, const std::string& out_dir) {
  std::vector<fs::path> files;
  if (fs::exists(traces_dir))
    for (const auto& entry : fs::directory_iterator(traces_dir))
      if (entry.path().extension() == ".csv") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    std::cerr << "report: no trace CSVs in " << traces_dir << "\n";
    return kExitDomain;
  }

  fs::create_directories(out_dir);
  std::ofstream atk(fs::path(out_dir) / "report_attack.csv");
  std::ofstream quiet(fs::path(out_dir) / "report_no_attack.csv");
  atk << "trace,k,g,Th,alarm,attack_active\n";
  quiet << "trace,k,g,Th,alarm\n";

  std::map<long, long> th_votes_quiet;
  for (const auto& file : files) {
    const SimTrace trace = read_trace_csv(file.string());
    bool any_attack = false;
    for (const auto& row : trace.rows) any_attack = any_attack || row.attack_active;
    for (const auto& row : trace.rows) {
      if (any_attack) {
        atk << file.filename().string() << ',' << row.state.k << ',' << format_g9(row.g) << ','
            << format_g9(row.Th) << ',' << (row.alarm ? 1 : 0) << ','
            << (row.attack_active ? 1 : 0) << '\n';
      } else {
        quiet << file.filename().string() << ',' << row.state.k << ',' << format_g9(row.g)
              << ',' << format_g9(row.Th) << ',' << (row.alarm ? 1 : 0) << '\n';
        ++th_votes_quiet[std::lround(row.Th)];
      }
    }
  }

  long majority_th = 0, best = -1;
  for (const auto& [th, count] : th_votes_quiet) {
    if (count > best) {
      best = count;
      majority_th = th;
    }
  }
  json summary;
  summary["generated_at"] = timestamp_utc();
  summary["traces"] = static_cast<int>(files.size());
  summary["majority_Th_no_attack"] = best >= 0 ? json(majority_th) : json(nullptr);
  std::ofstream sum(fs::path(out_dir) / "report_summary.json");
  sum << summary.dump(2) << "\n";

  std::cout << "report over " << files.size() << " traces written to " << out_dir << "\n";
  if (best >= 0) std::cout << "  majority no-attack threshold: " << majority_th << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FDI attack monitoring workbench (simulation, detection, region synthesis, "
               "multi-agent training)"};
  app.require_subcommand(1);

  std::string config_path, out_flag, weights_dir, scenario = "no-attack", traces_dir;
  std::optional<std::uint64_t> seed_override;
  std::optional<int> episodes_override;
  int n_seeds = 100;
  double baseline_th = 12.0;
  int baseline_l = 4;
  int onset = -1;
  bool fresh = false, verbose = false;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    if (needs_config)
      sub->add_option("-c,--config", config_path, "benchmark config (JSON)")->required();
    sub->add_option("-o,--out", out_flag, "output directory (or FDIMON_OUT_DIR)");
    sub->add_option("--seed", seed_override, "override the config seed");
  };

  CLI::App* synth = app.add_subcommand("synth-region", "synthesize the preferable operating region");
  add_common(synth, true);

  CLI::App* train = app.add_subcommand("train", "offline multi-agent training");
  add_common(train, true);
  train->add_option("--episodes", episodes_override, "override training.episodes");
  train->add_flag("--fresh", fresh, "ignore an existing checkpoint");
  train->add_flag("-v,--verbose", verbose, "progress to stderr");

  CLI::App* evaluate = app.add_subcommand("evaluate", "run the online monitor over seeds");
  add_common(evaluate, true);
  evaluate->add_option("-w,--weights", weights_dir, "directory with trained weights")->required();
  evaluate->add_option("--scenario", scenario,
                       "no-attack | trained-attacker | scripted-attack | constant-threshold-baseline");
  evaluate->add_option("--seeds", n_seeds, "number of evaluation episodes");
  evaluate->add_option("--threshold", baseline_th, "constant baseline threshold");
  evaluate->add_option("--window", baseline_l, "constant baseline window length");
  evaluate->add_option("--onset", onset, "attack onset step (default: scenario-specific)");
  evaluate->add_option("--episodes", episodes_override, "override steps per episode source");

  CLI::App* report = app.add_subcommand("report", "plot-ready CSV summaries from traces");
  report->add_option("-t,--traces", traces_dir, "directory of trace CSVs")->required();
  report->add_option("-o,--out", out_flag, "output directory (or FDIMON_OUT_DIR)");

  CLI11_PARSE(app, argc, argv);

  try {
    const std::string out_dir = out_dir_or_default(out_flag);
    if (report->parsed()) return cmd_report(traces_dir, out_dir);

    BenchmarkConfig cfg = load_config(config_path);
    if (seed_override) cfg.seed = *seed_override;
    if (episodes_override) cfg.training.episodes = *episodes_override;

    if (synth->parsed()) return cmd_synth_region(cfg, out_dir);
    if (train->parsed()) return cmd_train(cfg, out_dir, fresh, verbose);
    if (evaluate->parsed()) {
      if (onset < 0) onset = scenario == "scripted-attack" ? 50 : 10;
      return cmd_evaluate(cfg, weights_dir, out_dir, scenario, n_seeds, baseline_th,
                          baseline_l, onset);
    }
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return kExitConfig;
  } catch (const TrainingAbort& err) {
    std::cerr << "training abort: " << err.what() << "\n";
    return kExitTrainingAbort;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitDomain;
  }
  return kExitOk;
}
