#include "fdimon/trace_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "fdimon/errors.hpp"

namespace fdimon {

std::string format_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

}  // namespace

void write_trace_csv(const std::string& path, const SimTrace& trace, int n, int m, int p) {
  std::ofstream out(path);
  if (!out) throw ConfigError("write_trace_csv: cannot open " + path);

  out << "k";
  for (int i = 1; i <= n; ++i) out << ",x_" << i;
  for (int i = 1; i <= n; ++i) out << ",xhat_" << i;
  for (int i = 1; i <= m; ++i) out << ",y_" << i;
  for (int i = 1; i <= p; ++i) out << ",u_" << i;
  for (int i = 1; i <= m; ++i) out << ",r_" << i;
  for (int i = 1; i <= m; ++i) out << ",a_y_" << i;
  for (int i = 1; i <= p; ++i) out << ",a_u_" << i;
  out << ",g,Th,win_l,alarm,attack_active,controller_mode\n";

  for (const TraceRow& row : trace.rows) {
    out << row.state.k;
    for (int i = 0; i < n; ++i) out << ',' << format_g9(row.state.x(i));
    for (int i = 0; i < n; ++i) out << ',' << format_g9(row.state.x_hat(i));
    for (int i = 0; i < m; ++i) out << ',' << format_g9(row.state.y(i));
    for (int i = 0; i < p; ++i) out << ',' << format_g9(row.state.u(i));
    for (int i = 0; i < m; ++i) out << ',' << format_g9(row.state.r(i));
    for (int i = 0; i < m; ++i) out << ',' << format_g9(row.attack.a_y(i));
    for (int i = 0; i < p; ++i) out << ',' << format_g9(row.attack.a_u(i));
    out << ',' << format_g9(row.g) << ',' << format_g9(row.Th) << ',' << row.win_l << ','
        << (row.alarm ? 1 : 0) << ',' << (row.attack_active ? 1 : 0) << ','
        << (row.controller_mode ? 1 : 0) << '\n';
  }
  if (!out) throw ConfigError("write_trace_csv: write failed for " + path);
}

SimTrace read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("read_trace_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("read_trace_csv: empty file " + path);

  const auto header = split_csv_line(line);
  int n = 0, m = 0, p = 0;
  for (const auto& h : header) {
    if (h.rfind("x_", 0) == 0) ++n;
    if (h.rfind("y_", 0) == 0) ++m;
    if (h.rfind("u_", 0) == 0) ++p;
  }
  if (n == 0 || m == 0 || p == 0) throw ConfigError("read_trace_csv: malformed header in " + path);

  SimTrace trace;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    const std::size_t expected = 1 + 2 * n + 2 * m + p + m + p + 6;
    if (f.size() != expected)
      throw ConfigError("read_trace_csv: wrong field count in " + path);
    std::size_t i = 0;
    TraceRow row;
    row.state.k = std::stoi(f[i++]);
    auto take_vec = [&](int len) {
      Eigen::VectorXd v(len);
      for (int j = 0; j < len; ++j) v(j) = std::stod(f[i++]);
      return v;
    };
    row.state.x = take_vec(n);
    row.state.x_hat = take_vec(n);
    row.state.y = take_vec(m);
    row.state.u = take_vec(p);
    row.state.r = take_vec(m);
    row.attack.a_y = take_vec(m);
    row.attack.a_u = take_vec(p);
    row.g = std::stod(f[i++]);
    row.Th = std::stod(f[i++]);
    row.win_l = std::stoi(f[i++]);
    row.alarm = f[i++] == "1";
    row.attack_active = f[i++] == "1";
    row.controller_mode = f[i++] == "1";
    trace.rows.push_back(std::move(row));
  }
  trace.requested_steps = static_cast<int>(trace.rows.size());
  if (!trace.rows.empty()) {
    trace.final_x = trace.rows.back().state.x;
    trace.final_x_hat = trace.rows.back().state.x_hat;
  }
  return trace;
}

void write_training_log_csv(const std::string& path, const std::vector<EpisodeLog>& log) {
  std::ofstream out(path);
  if (!out) throw ConfigError("write_training_log_csv: cannot open " + path);
  out << "episode,attacker_return,detector_return,controller_return,empirical_tpr,empirical_far\n";
  for (const EpisodeLog& e : log) {
    out << e.episode << ',' << format_g9(e.attacker_return) << ','
        << format_g9(e.detector_return) << ',' << format_g9(e.controller_return) << ','
        << format_g9(e.empirical_tpr) << ',' << format_g9(e.empirical_far) << '\n';
  }
  if (!out) throw ConfigError("write_training_log_csv: write failed for " + path);
}

std::vector<EpisodeLog> read_training_log_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("read_training_log_csv: cannot open " + path);
  std::string line;
  std::getline(in, line);  // header
  std::vector<EpisodeLog> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 6) throw ConfigError("read_training_log_csv: malformed row in " + path);
    EpisodeLog e;
    e.episode = std::stoi(f[0]);
    e.attacker_return = std::stod(f[1]);
    e.detector_return = std::stod(f[2]);
    e.controller_return = std::stod(f[3]);
    e.empirical_tpr = std::stod(f[4]);
    e.empirical_far = std::stod(f[5]);
    out.push_back(e);
  }
  return out;
}

}  // namespace fdimon
