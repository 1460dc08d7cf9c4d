#include "esbound/system_io.hpp"

#include "esbound/csv.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace esb {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  return it == j.end() || it->is_null() ? fallback : it->get<T>();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

PowerSystem parse_system(const json& doc) {
  PowerSystem sys;
  const json& net = doc.at("network");
  sys.network.node_count = net.at("nodes").get<int>();
  sys.network.slack_node = get_or<int>(net, "slack", 0);
  bool all_susceptance = true;
  for (const auto& jl : get_or<json>(net, "lines", json::array())) {
    Line l;
    l.from = jl.at("from").get<int>();
    l.to = jl.at("to").get<int>();
    l.flow_limit = jl.at("flow_limit").get<double>();
    if (jl.contains("susceptance") && !jl["susceptance"].is_null())
      l.susceptance = jl["susceptance"].get<double>();
    else
      all_susceptance = false;
    sys.network.lines.push_back(l);
  }
  const int n_lines = sys.network.line_count();
  if (net.contains("ptdf") && !net["ptdf"].is_null()) {
    const json& jp = net["ptdf"];
    const int cols = jp.empty() ? sys.network.node_count : static_cast<int>(jp[0].size());
    sys.network.ptdf.resize(jp.size(), cols);
    for (std::size_t r = 0; r < jp.size(); ++r) {
      if (static_cast<int>(jp[r].size()) != cols) throw IoError("ptdf rows have unequal length");
      for (int c = 0; c < cols; ++c) sys.network.ptdf(r, c) = jp[r][c].get<double>();
    }
  } else if (n_lines == 0) {
    sys.network.ptdf = Eigen::MatrixXd::Zero(0, sys.network.node_count);
  } else if (all_susceptance) {
    sys.network.ptdf =
        compute_ptdf(sys.network.node_count, sys.network.lines, sys.network.slack_node);
  } else {
    throw ValidationError("network needs either a ptdf matrix or susceptances on every line");
  }

  for (const auto& jg : get_or<json>(doc, "generators", json::array())) {
    Generator g;
    g.node = jg.at("node").get<int>();
    g.cost_quad = get_or<double>(jg, "cost_quad", 0.0);
    g.cost_lin = get_or<double>(jg, "cost_lin", 0.0);
    g.g_max = jg.at("g_max").get<double>();
    g.g_min = get_or<double>(jg, "g_min", 0.0);
    g.ramp_up = get_or<double>(jg, "ramp_up", g.g_max);
    g.ramp_down = get_or<double>(jg, "ramp_down", g.g_max);
    sys.generators.push_back(g);
  }
  int idx = 0;
  for (const auto& js : get_or<json>(doc, "storages", json::array())) {
    Storage s;
    s.id = get_or<std::string>(js, "id", "s" + std::to_string(idx));
    s.node = js.at("node").get<int>();
    s.p_max = js.at("p_max").get<double>();
    s.e_max = js.at("e_max").get<double>();
    s.e_min = get_or<double>(js, "e_min", 0.0);
    s.efficiency = get_or<double>(js, "efficiency", 1.0);
    s.marginal_cost = get_or<double>(js, "marginal_cost", 0.0);
    s.e_init = get_or<double>(js, "e_init", 0.5 * (s.e_min + s.e_max));
    sys.storages.push_back(s);
    ++idx;
  }
  const json cfg = get_or<json>(doc, "config", json::object());
  sys.config.epsilon = get_or<double>(cfg, "epsilon", 0.1);
  sys.config.reserve_ratio = get_or<double>(cfg, "reserve_ratio", 0.0);
  sys.config.horizon = get_or<int>(cfg, "horizon", 24);
  sys.config.step_hours = get_or<double>(cfg, "step_hours", 1.0);
  return sys;
}

LoadedConfig load_config(const std::string& path) {
  LoadedConfig out;
  out.path = path;
  try {
    out.raw = json::parse(slurp(path));
  } catch (const json::parse_error& e) {
    throw IoError(path + ": " + e.what());
  }
  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](const std::string& rel) { return (base / rel).string(); };
  try {
    out.system = parse_system(out.raw);
    const json& nl = out.raw.at("netload");
    const std::string mu_path = resolve(nl.at("mu").get<std::string>());
    const std::string sigma_path = resolve(nl.at("sigma").get<std::string>());
    out.sidecar_bytes = slurp(mu_path) + slurp(sigma_path);
    out.netload.mu = csv::read_labeled_matrix(mu_path);
    out.netload.sigma = csv::read_labeled_matrix(sigma_path);
    if (nl.contains("correlation") && !nl["correlation"].is_null()) {
      const std::string corr_path = resolve(nl["correlation"].get<std::string>());
      out.sidecar_bytes += slurp(corr_path);
      out.netload.correlation = csv::read_labeled_matrix(corr_path);
    }
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  return out;
}

std::string config_hash(const LoadedConfig& cfg) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
  };
  mix(cfg.raw.dump());
  mix(cfg.sidecar_bytes);
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace esb
