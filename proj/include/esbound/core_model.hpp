#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace esb {

// Error hierarchy shared by all modules.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ValidationError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

// All quantities of power are stored as energy per step (MWh).

struct Line {
  int from = 0;
  int to = 0;
  double flow_limit = 0.0;  // MWh per step
  std::optional<double> susceptance;
};

struct Network {
  int node_count = 1;
  std::vector<Line> lines;
  Eigen::MatrixXd ptdf;  // lines x nodes
  int slack_node = 0;

  int line_count() const { return static_cast<int>(lines.size()); }
};

struct Generator {
  int node = 0;
  double cost_quad = 0.0;  // $/MWh^2
  double cost_lin = 0.0;   // $/MWh
  double g_max = 0.0;
  double g_min = 0.0;
  double ramp_up = 0.0;
  double ramp_down = 0.0;

  double cost(double g) const { return cost_quad * g * g + cost_lin * g; }
  double marginal_cost(double g) const { return 2.0 * cost_quad * g + cost_lin; }
};

struct Storage {
  std::string id;
  int node = 0;
  double p_max = 0.0;
  double e_max = 0.0;
  double e_min = 0.0;
  double efficiency = 1.0;  // one-way
  double marginal_cost = 0.0;
  double e_init = 0.0;
};

// Per-node, per-period Gaussian netload (load minus renewables).
struct NetloadModel {
  Eigen::MatrixXd mu;     // nodes x periods
  Eigen::MatrixXd sigma;  // nodes x periods
  std::optional<Eigen::MatrixXd> correlation;  // nodes x nodes, same for all periods

  int nodes() const { return static_cast<int>(mu.rows()); }
  int periods() const { return static_cast<int>(mu.cols()); }

  double total_mean(int t) const { return mu.col(t).sum(); }
  // Standard deviation of sum_n w_n d_{n,t}.
  double weighted_sigma(const Eigen::VectorXd& weights, int t) const;
  double total_sigma(int t) const;
};

struct SystemConfig {
  double epsilon = 0.1;
  double reserve_ratio = 0.0;
  int horizon = 24;
  double step_hours = 1.0;
};

struct PowerSystem {
  Network network;
  std::vector<Generator> generators;
  std::vector<Storage> storages;
  SystemConfig config;

  int storage_index(const std::string& id) const;
};

struct Violation {
  std::string code;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  std::string slack_note;

  bool ok() const { return violations.empty(); }
  std::string to_string() const;
};

ValidationReport validate_system(const Network& network, const std::vector<Generator>& generators,
                                 const std::vector<Storage>& storages, const NetloadModel& netload,
                                 const SystemConfig& config);

inline ValidationReport validate_system(const PowerSystem& sys, const NetloadModel& netload) {
  return validate_system(sys.network, sys.generators, sys.storages, netload, sys.config);
}

// DC power-flow PTDF from line susceptances. Column of the slack node is zero.
// Throws ValidationError on a disconnected graph or non-positive susceptance.
Eigen::MatrixXd compute_ptdf(int node_count, const std::vector<Line>& lines, int slack_node);

// Line flows by a direct DC power-flow solve (angles), for a balanced injection vector.
Eigen::VectorXd dc_power_flow(int node_count, const std::vector<Line>& lines, int slack_node,
                              const Eigen::VectorXd& injections);

}  // namespace esb
