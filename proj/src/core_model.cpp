#include "esbound/core_model.hpp"

#include "esbound/price_process.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <sstream>

namespace esb {

double NetloadModel::weighted_sigma(const Eigen::VectorXd& weights, int t) const {
  const Eigen::VectorXd s = weights.cwiseProduct(sigma.col(t));
  if (correlation) return std::sqrt(std::max(0.0, s.dot(*correlation * s)));
  return s.norm();
}

double NetloadModel::total_sigma(int t) const {
  return weighted_sigma(Eigen::VectorXd::Ones(nodes()), t);
}

int PowerSystem::storage_index(const std::string& id) const {
  for (std::size_t s = 0; s < storages.size(); ++s)
    if (storages[s].id == id) return static_cast<int>(s);
  return -1;
}

std::string ValidationReport::to_string() const {
  std::ostringstream os;
  if (ok()) {
    os << "pass";
  } else {
    os << violations.size() << " violation(s)";
    for (const auto& v : violations) os << "\n  [" << v.code << "] " << v.message;
  }
  if (!slack_note.empty()) os << "\n  " << slack_note;
  return os.str();
}

namespace {

class Reporter {
 public:
  explicit Reporter(ValidationReport& r) : report_(r) {}
  template <typename... Args>
  void add(const std::string& code, const Args&... parts) {
    std::ostringstream os;
    (os << ... << parts);
    report_.violations.push_back({code, os.str()});
  }

 private:
  ValidationReport& report_;
};

bool finite_matrix(const Eigen::MatrixXd& m) { return m.allFinite(); }

}  // namespace

ValidationReport validate_system(const Network& network, const std::vector<Generator>& generators,
                                 const std::vector<Storage>& storages, const NetloadModel& netload,
                                 const SystemConfig& config) {
  ValidationReport report;
  Reporter r(report);
  const int n_nodes = network.node_count;

  if (n_nodes < 1) r.add("dimension_mismatch", "node_count must be positive, got ", n_nodes);
  if (!(config.epsilon > 0.0 && config.epsilon < 0.5))
    r.add("epsilon_range", "epsilon must lie in (0, 0.5), got ", config.epsilon);
  if (config.horizon < 2) r.add("horizon", "horizon must be at least 2, got ", config.horizon);
  if (!(config.reserve_ratio >= 0.0)) r.add("reserve_ratio", "reserve_ratio must be >= 0");
  if (!(config.step_hours > 0.0)) r.add("step_hours", "step_hours must be positive");

  // Network.
  std::vector<int> degree(std::max(n_nodes, 0), 0);
  for (int l = 0; l < network.line_count(); ++l) {
    const Line& line = network.lines[l];
    if (line.from < 0 || line.from >= n_nodes || line.to < 0 || line.to >= n_nodes) {
      r.add("line_endpoint", "line ", l, " has endpoint outside [0, ", n_nodes, ")");
      continue;
    }
    if (line.from == line.to) r.add("line_endpoint", "line ", l, " is a self loop");
    ++degree[line.from];
    ++degree[line.to];
    if (!(line.flow_limit > 0.0)) r.add("flow_limit", "line ", l, " flow limit must be > 0");
    if (line.susceptance && !(*line.susceptance > 0.0))
      r.add("susceptance", "line ", l, " susceptance must be > 0");
  }
  const bool ptdf_shape_ok =
      network.ptdf.rows() == network.line_count() && network.ptdf.cols() == n_nodes;
  if (!ptdf_shape_ok) {
    r.add("dimension_mismatch", "ptdf is ", network.ptdf.rows(), "x", network.ptdf.cols(),
          ", expected ", network.line_count(), "x", n_nodes);
  } else {
    if (!finite_matrix(network.ptdf)) r.add("ptdf_finite", "ptdf contains non-finite entries");
    for (int l = 0; l < network.ptdf.rows(); ++l)
      for (int n = 0; n < network.ptdf.cols(); ++n)
        if (std::abs(network.ptdf(l, n)) > 1.0 + 1e-9)
          r.add("ptdf_range", "ptdf(", l, ",", n, ") = ", network.ptdf(l, n), " outside [-1, 1]");
    const bool all_susceptances =
        network.line_count() > 0 &&
        std::all_of(network.lines.begin(), network.lines.end(),
                    [](const Line& line) { return line.susceptance.has_value(); });
    if (all_susceptances && report.ok()) {
      try {
        const Eigen::MatrixXd recomputed =
            compute_ptdf(n_nodes, network.lines, network.slack_node);
        const double diff = (recomputed - network.ptdf).cwiseAbs().maxCoeff();
        if (diff > 1e-9)
          r.add("ptdf_consistency", "stored ptdf differs from susceptance-derived ptdf by ", diff);
        std::ostringstream note;
        note << "ptdf slack node: " << network.slack_node;
        report.slack_note = note.str();
      } catch (const Error& e) {
        r.add("network_topology", e.what());
      }
    }
  }

  // Generators.
  if (generators.empty()) r.add("no_generators", "generator set is empty");
  for (std::size_t i = 0; i < generators.size(); ++i) {
    const Generator& g = generators[i];
    if (g.node < 0 || g.node >= n_nodes) r.add("generator_node", "generator ", i, " node out of range");
    if (!(g.g_min >= 0.0 && g.g_min <= g.g_max))
      r.add("generator_limits", "generator ", i, " requires 0 <= g_min <= g_max");
    if (!(g.ramp_up >= 0.0 && g.ramp_down >= 0.0))
      r.add("generator_ramp", "generator ", i, " ramp limits must be >= 0");
    if (!(g.cost_quad >= 0.0)) r.add("generator_convexity", "generator ", i, " cost_quad < 0");
    if (!(g.cost_lin + 2.0 * g.cost_quad * g.g_min >= 0.0))
      r.add("generator_monotone", "generator ", i, " cost not increasing at g_min");
  }

  // Storages.
  for (std::size_t s = 0; s < storages.size(); ++s) {
    const Storage& st = storages[s];
    if (st.node < 0 || st.node >= n_nodes) {
      r.add("storage_node", "storage ", st.id, " node out of range");
    } else if (n_nodes > 1 && degree[st.node] == 0) {
      r.add("isolated_storage_node", "storage ", st.id, " sits on node ", st.node,
            " which has no incident line");
    }
    if (!(st.p_max > 0.0)) r.add("storage_power", "storage ", st.id, " p_max must be > 0");
    if (!(st.e_min <= st.e_init && st.e_init <= st.e_max))
      r.add("storage_soc", "storage ", st.id, " requires e_min <= e_init <= e_max");
    if (!(st.e_min < st.e_max)) r.add("storage_soc", "storage ", st.id, " requires e_min < e_max");
    if (!(st.efficiency > 0.0 && st.efficiency <= 1.0))
      r.add("storage_efficiency", "storage ", st.id, " efficiency must lie in (0, 1]");
    if (!(st.marginal_cost >= 0.0))
      r.add("storage_cost", "storage ", st.id, " marginal cost must be >= 0");
  }

  // Netload.
  const bool shape_ok = netload.mu.rows() == n_nodes && netload.sigma.rows() == n_nodes &&
                        netload.mu.cols() == config.horizon &&
                        netload.sigma.cols() == config.horizon;
  if (!shape_ok) {
    r.add("dimension_mismatch", "netload mu is ", netload.mu.rows(), "x", netload.mu.cols(),
          ", sigma is ", netload.sigma.rows(), "x", netload.sigma.cols(), ", expected ", n_nodes,
          "x", config.horizon);
    return report;
  }
  for (int n = 0; n < n_nodes; ++n)
    for (int t = 0; t < config.horizon; ++t) {
      if (!std::isfinite(netload.mu(n, t)))
        r.add("netload_finite", "mu(node ", n, ", t ", t, ") is not finite");
      const double sd = netload.sigma(n, t);
      if (!std::isfinite(sd) || sd < 0.0)
        r.add("netload_sigma", "sigma(node ", n, ", t ", t, ") = ", sd, " must be finite and >= 0");
    }
  if (netload.correlation) {
    const auto& c = *netload.correlation;
    if (c.rows() != n_nodes || c.cols() != n_nodes)
      r.add("dimension_mismatch", "correlation must be ", n_nodes, "x", n_nodes);
    else if (!c.allFinite() || (c - c.transpose()).cwiseAbs().maxCoeff() > 1e-12)
      r.add("correlation", "correlation matrix must be finite and symmetric");
  }
  if (!report.ok() || generators.empty()) return report;

  // Capacity pre-check against the (1 - eps) quantile of total netload plus reserve.
  if (config.epsilon > 0.0 && config.epsilon < 0.5) {
    double capacity = 0.0;
    for (const auto& g : generators) capacity += g.g_max;
    const double z = normal_quantile(1.0 - config.epsilon);
    for (int t = 0; t < config.horizon; ++t) {
      const double quantile = netload.total_mean(t) + z * netload.total_sigma(t);
      const double need = (1.0 + config.reserve_ratio) * quantile;
      if (need > capacity)
        r.add("capacity", "insufficient capacity at t=", t, ": need ", need, " MWh, have ",
              capacity, " MWh");
    }
  }
  return report;
}

namespace {

void check_connected(int node_count, const std::vector<Line>& lines) {
  std::vector<std::vector<int>> adj(node_count);
  for (const auto& l : lines) {
    adj[l.from].push_back(l.to);
    adj[l.to].push_back(l.from);
  }
  std::vector<bool> seen(node_count, false);
  std::queue<int> q;
  q.push(0);
  seen[0] = true;
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (int w : adj[u])
      if (!seen[w]) {
        seen[w] = true;
        q.push(w);
      }
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end())
    throw ValidationError("network graph is disconnected");
}

// Reduced nodal susceptance matrix with the slack row/column removed.
Eigen::MatrixXd reduced_bus_matrix(int node_count, const std::vector<Line>& lines, int slack) {
  Eigen::MatrixXd bus = Eigen::MatrixXd::Zero(node_count, node_count);
  for (const auto& l : lines) {
    if (!l.susceptance || !(*l.susceptance > 0.0))
      throw ValidationError("every line needs a positive susceptance");
    const double b = *l.susceptance;
    bus(l.from, l.from) += b;
    bus(l.to, l.to) += b;
    bus(l.from, l.to) -= b;
    bus(l.to, l.from) -= b;
  }
  Eigen::MatrixXd red(node_count - 1, node_count - 1);
  for (int i = 0, ri = 0; i < node_count; ++i) {
    if (i == slack) continue;
    for (int j = 0, rj = 0; j < node_count; ++j) {
      if (j == slack) continue;
      red(ri, rj) = bus(i, j);
      ++rj;
    }
    ++ri;
  }
  return red;
}

}  // namespace

Eigen::MatrixXd compute_ptdf(int node_count, const std::vector<Line>& lines, int slack_node) {
  if (node_count < 1) throw ValidationError("node_count must be positive");
  if (slack_node < 0 || slack_node >= node_count) throw ValidationError("slack node out of range");
  const int n_lines = static_cast<int>(lines.size());
  for (const auto& l : lines)
    if (l.from < 0 || l.from >= node_count || l.to < 0 || l.to >= node_count)
      throw ValidationError("line endpoint out of range");
  Eigen::MatrixXd ptdf = Eigen::MatrixXd::Zero(n_lines, node_count);
  if (node_count == 1) return ptdf;
  check_connected(node_count, lines);

  const Eigen::MatrixXd red = reduced_bus_matrix(node_count, lines, slack_node);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(red);
  if (!lu.isInvertible()) throw ValidationError("reduced susceptance matrix is singular");
  const Eigen::MatrixXd x_red = lu.inverse();

  // Reactance matrix padded with zeros for the slack.
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(node_count, node_count);
  std::vector<int> to_reduced(node_count, -1);
  for (int i = 0, ri = 0; i < node_count; ++i)
    if (i != slack_node) to_reduced[i] = ri++;
  for (int i = 0; i < node_count; ++i)
    for (int j = 0; j < node_count; ++j)
      if (to_reduced[i] >= 0 && to_reduced[j] >= 0) x(i, j) = x_red(to_reduced[i], to_reduced[j]);

  for (int l = 0; l < n_lines; ++l) {
    const auto& line = lines[l];
    for (int n = 0; n < node_count; ++n)
      ptdf(l, n) = *line.susceptance * (x(line.from, n) - x(line.to, n));
  }
  return ptdf;
}

Eigen::VectorXd dc_power_flow(int node_count, const std::vector<Line>& lines, int slack_node,
                              const Eigen::VectorXd& injections) {
  check_connected(node_count, lines);
  const Eigen::MatrixXd red = reduced_bus_matrix(node_count, lines, slack_node);
  Eigen::VectorXd p_red(node_count - 1);
  for (int i = 0, ri = 0; i < node_count; ++i)
    if (i != slack_node) p_red(ri++) = injections(i);
  const Eigen::VectorXd angle_red = red.fullPivLu().solve(p_red);
  Eigen::VectorXd angle = Eigen::VectorXd::Zero(node_count);
  for (int i = 0, ri = 0; i < node_count; ++i)
    if (i != slack_node) angle(i) = angle_red(ri++);
  Eigen::VectorXd flows(lines.size());
  for (std::size_t l = 0; l < lines.size(); ++l)
    flows(l) = *lines[l].susceptance * (angle(lines[l].from) - angle(lines[l].to));
  return flows;
}

}  // namespace esb
