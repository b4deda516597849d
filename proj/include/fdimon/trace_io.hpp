#pragma once

#include <string>
#include <vector>

#include "fdimon/env.hpp"
#include "fdimon/lti.hpp"

namespace fdimon {

// All floating output goes through this: 9 significant digits, so repeated
// runs with the same seed produce byte-identical files.
std::string format_g9(double v);

// Trace CSV schema (fixed):
// k, x_1..x_n, xhat_1..xhat_n, y_1..y_m, u_1..u_l, r_1..r_m,
// a_y_1..a_y_m, a_u_1..a_u_l, g, Th, win_l, alarm, attack_active, controller_mode
void write_trace_csv(const std::string& path, const SimTrace& trace, int n, int m, int p);
SimTrace read_trace_csv(const std::string& path);

// Training log CSV:
// episode, attacker_return, detector_return, controller_return, empirical_tpr, empirical_far
void write_training_log_csv(const std::string& path, const std::vector<EpisodeLog>& log);
std::vector<EpisodeLog> read_training_log_csv(const std::string& path);

}  // namespace fdimon
