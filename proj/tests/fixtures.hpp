#pragma once

#include "esbound/core_model.hpp"
#include "esbound/csv.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

namespace esb::test {

// Three-bus ring, one generator per bus, one storage on the expensive bus.
inline PowerSystem three_node_system(int horizon = 24) {
  PowerSystem sys;
  sys.network.node_count = 3;
  sys.network.slack_node = 0;
  sys.network.lines = {{0, 1, 250.0, 10.0}, {1, 2, 250.0, 10.0}, {0, 2, 250.0, 10.0}};
  sys.network.ptdf = compute_ptdf(3, sys.network.lines, 0);
  sys.generators = {
      {0, 0.02, 15.0, 400.0, 0.0, 400.0, 400.0},
      {1, 0.03, 22.0, 250.0, 0.0, 250.0, 250.0},
      {2, 0.05, 30.0, 200.0, 0.0, 200.0, 200.0},
  };
  sys.storages = {{"bat", 2, 30.0, 120.0, 0.0, 0.95, 2.0, 60.0}};
  sys.config.epsilon = 0.1;
  sys.config.reserve_ratio = 0.0;
  sys.config.horizon = horizon;
  return sys;
}

inline double daily_shape(int t) {
  return 1.0 + 0.35 * std::sin(2.0 * M_PI * (t - 9) / 24.0) + 0.1 * std::sin(4.0 * M_PI * t / 24.0);
}

inline NetloadModel three_node_netload(int horizon = 24, double sigma_frac = 0.06) {
  NetloadModel nl;
  nl.mu.resize(3, horizon);
  nl.sigma.resize(3, horizon);
  const double base[3] = {110.0, 90.0, 140.0};
  for (int t = 0; t < horizon; ++t)
    for (int n = 0; n < 3; ++n) {
      nl.mu(n, t) = base[n] * daily_shape(t);
      nl.sigma(n, t) = sigma_frac * nl.mu(n, t);
    }
  return nl;
}

// Writes a JSON config with CSV sidecars and returns the JSON path.
inline std::string write_config(const std::filesystem::path& dir, const PowerSystem& sys,
                                const NetloadModel& nl, const nlohmann::json& extra = {}) {
  std::filesystem::create_directories(dir);
  nlohmann::json doc;
  doc["network"]["nodes"] = sys.network.node_count;
  doc["network"]["slack"] = sys.network.slack_node;
  doc["network"]["lines"] = nlohmann::json::array();
  for (const auto& l : sys.network.lines) {
    nlohmann::json jl{{"from", l.from}, {"to", l.to}, {"flow_limit", l.flow_limit}};
    if (l.susceptance) jl["susceptance"] = *l.susceptance;
    doc["network"]["lines"].push_back(jl);
  }
  for (const auto& g : sys.generators)
    doc["generators"].push_back({{"node", g.node}, {"cost_quad", g.cost_quad}, {"cost_lin", g.cost_lin},
                                 {"g_max", g.g_max}, {"g_min", g.g_min}, {"ramp_up", g.ramp_up},
                                 {"ramp_down", g.ramp_down}});
  doc["storages"] = nlohmann::json::array();
  for (const auto& s : sys.storages)
    doc["storages"].push_back({{"id", s.id}, {"node", s.node}, {"p_max", s.p_max}, {"e_max", s.e_max},
                               {"e_min", s.e_min}, {"efficiency", s.efficiency},
                               {"marginal_cost", s.marginal_cost}, {"e_init", s.e_init}});
  doc["config"] = {{"epsilon", sys.config.epsilon}, {"reserve_ratio", sys.config.reserve_ratio},
                   {"horizon", sys.config.horizon}, {"step_hours", sys.config.step_hours}};
  doc["netload"] = {{"mu", "mu.csv"}, {"sigma", "sigma.csv"}};
  doc["price"] = {{"baseline_sigma", 5.0}, {"n_bins", 5}, {"soc_points", 31}, {"scenarios", 100}};
  doc["simulation"] = {{"da_scenarios", 1}, {"rt_per_da", 1}, {"seed", 7}};
  if (extra.is_object()) doc.merge_patch(extra);
  csv::write_labeled_matrix((dir / "mu.csv").string(), nl.mu);
  csv::write_labeled_matrix((dir / "sigma.csv").string(), nl.sigma);
  const auto path = dir / "system.json";
  std::ofstream(path) << doc.dump(2);
  return path.string();
}

}  // namespace esb::test
