#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fdimon/ddpg.hpp"
#include "fdimon/env.hpp"
#include "fdimon/lti.hpp"
#include "fdimon/region.hpp"

namespace fdimon {

struct RegionSynthParams {
  int steps = 50;
  double depth_step = 0.1;
  double sigma_mult = 3.0;
};

struct DetectorParams {
  int l_max = 10;
  double Th_min = 0.5;
  double Th_max = 50.0;
  double epsilon = 0.05;
};

// Fully validated benchmark configuration. Every module precondition is
// checked at load time; unknown keys are rejected.
struct BenchmarkConfig {
  SystemModel model;
  Box safe_region;
  RegionSynthParams region;
  DetectorParams detector;
  RewardSpec rewards;
  DdpgConfig ddpg;
  TrainSchedule training;
  Eigen::VectorXd eps_y, eps_u;
  std::uint64_t seed = 1;

  std::vector<std::string> applied_defaults;  // key paths filled from defaults
  std::string canonical;                      // canonical serialization
  std::string hash;                           // FNV-1a 64 of `canonical`, hex

  AgentSpaces make_spaces() const;
};

// Parses, applies documented defaults, validates. Throws ConfigError with the
// offending line (parse) or field name (validation).
BenchmarkConfig load_config(const std::string& path);
BenchmarkConfig parse_config(const std::string& json_text, const std::string& origin = "<string>");

std::string config_hash(const std::string& canonical);

extern const char* const kToolVersion;

}  // namespace fdimon
