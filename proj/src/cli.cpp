#include "esbound/cli.hpp"

#include "esbound/ced.hpp"
#include "esbound/csv.hpp"
#include "esbound/price_process.hpp"
#include "esbound/sdp.hpp"
#include "esbound/simulation.hpp"
#include "esbound/system_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <random>
#include <sstream>

#ifndef ESBOUND_VERSION
#define ESBOUND_VERSION "esbound-dev"
#endif

namespace esb {

namespace fs = std::filesystem;
using nlohmann::json;

std::string version_string() { return ESBOUND_VERSION; }

namespace {

struct CommonArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::vector<double> epsilon;
  std::vector<double> sigma_scale;
  std::string toggles;
  std::string mode = "da";
  std::string storage;
  std::optional<int> da_scenarios, rt_per_da;
  std::vector<double> withholding;
  bool fix_and_resolve = false;
  bool fresh = false;
};

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string resolve_out(const CommonArgs& a, const std::string& command) {
  if (!a.out.empty()) return a.out;
  const char* root = std::getenv("OUT_ROOT");
  return (fs::path(root && *root ? root : "out") / command).string();
}

int resolve_workers(const CommonArgs& a, int fallback) {
  if (a.workers) return std::max(1, *a.workers);
  if (const char* w = std::getenv("WORKERS"); w && *w) {
    try {
      return std::max(1, std::stoi(w));
    } catch (const std::exception&) {
      throw ValidationError(std::string("WORKERS is not an integer: ") + w);
    }
  }
  return fallback;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) && !j[key].is_null() ? j[key].get<T>() : fallback;
}

PriceModelConfig parse_price(const json& raw) {
  PriceModelConfig p;
  const json j = get_or<json>(raw, "price", json::object());
  p.baseline_sigma = get_or(j, "baseline_sigma", p.baseline_sigma);
  p.n_bins = get_or(j, "n_bins", p.n_bins);
  p.soc_points = get_or(j, "soc_points", p.soc_points);
  p.scenarios = get_or(j, "scenarios", p.scenarios);
  p.ar1 = get_or(j, "ar1", p.ar1);
  p.n_segments = get_or(j, "n_segments", p.n_segments);
  if (p.baseline_sigma < 0.0) throw ValidationError("price.baseline_sigma must be >= 0");
  if (p.n_bins < 1 || p.soc_points < 3 || p.scenarios < 1 || p.n_segments < 1)
    throw ValidationError("price section has a non-positive count");
  return p;
}

ExperimentPlan parse_plan(const LoadedConfig& cfg, const CommonArgs& a) {
  ExperimentPlan plan;
  const json j = get_or<json>(cfg.raw, "simulation", json::object());
  plan.da_scenarios = get_or(j, "da_scenarios", plan.da_scenarios);
  plan.rt_per_da = get_or(j, "rt_per_da", plan.rt_per_da);
  plan.seed = get_or<std::uint64_t>(j, "seed", plan.seed);
  plan.epsilons = get_or(j, "epsilons", std::vector<double>{cfg.system.config.epsilon});
  plan.sigma_scales = get_or(j, "sigma_scales", plan.sigma_scales);
  plan.withholding = get_or(j, "withholding", plan.withholding);
  plan.toggles = parse_toggles(get_or<std::string>(j, "toggles", "both"));
  plan.decay_lookahead = get_or(j, "decay_lookahead", plan.decay_lookahead);
  plan.voll = get_or(j, "voll", plan.voll);
  plan.da_forecast_noise = get_or(j, "da_forecast_noise", plan.da_forecast_noise);
  plan.delta = get_or(j, "delta", plan.delta);
  plan.label = get_or<std::string>(j, "label", plan.label);

  if (a.da_scenarios) plan.da_scenarios = *a.da_scenarios;
  if (a.rt_per_da) plan.rt_per_da = *a.rt_per_da;
  if (a.seed) plan.seed = *a.seed;
  if (!a.epsilon.empty()) plan.epsilons = a.epsilon;
  if (!a.sigma_scale.empty()) plan.sigma_scales = a.sigma_scale;
  if (!a.withholding.empty()) plan.withholding = a.withholding;
  if (!a.toggles.empty()) plan.toggles = parse_toggles(a.toggles);
  plan.workers = resolve_workers(a, 1);

  if (plan.da_scenarios < 1 || plan.rt_per_da < 1) throw ValidationError("scenario counts must be >= 1");
  for (double e : plan.epsilons)
    if (!(e > 0.0 && e <= 0.5)) throw ValidationError("epsilon must lie in (0, 0.5]");
  for (double s : plan.sigma_scales)
    if (s < 0.0) throw ValidationError("sigma scale must be >= 0");
  for (double w : plan.withholding)
    if (w < 1.0) throw ValidationError("withholding factor must be >= 1");
  return plan;
}

json plan_json(const ExperimentPlan& p) {
  std::vector<std::string> toggles;
  for (Toggle t : p.toggles) toggles.push_back(to_string(t));
  return json{{"da_scenarios", p.da_scenarios},
              {"rt_per_da", p.rt_per_da},
              {"seed", p.seed},
              {"epsilons", p.epsilons},
              {"sigma_scales", p.sigma_scales},
              {"withholding", p.withholding},
              {"toggles", toggles},
              {"decay_lookahead", p.decay_lookahead},
              {"voll", p.voll},
              {"da_forecast_noise", p.da_forecast_noise},
              {"delta", p.delta},
              {"label", p.label}};
}

void write_json(const std::string& path, const json& j) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError("cannot write " + tmp);
    os << j.dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

LoadedConfig load_validated(const CommonArgs& a, std::ostream& err) {
  LoadedConfig cfg = load_config(a.config);
  const ValidationReport rep = validate_system(cfg.system, cfg.netload);
  if (!rep.ok()) {
    err << rep.to_string();
    throw ValidationError("configuration failed validation");
  }
  return cfg;
}

Eigen::MatrixXd sample_realized(const NetloadModel& nl, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(derive_seed(seed, 2), 0));
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd z(nl.nodes(), nl.periods());
  for (int c = 0; c < z.cols(); ++c)
    for (int r = 0; r < z.rows(); ++r) z(r, c) = normal(rng);
  return nl.mu + nl.sigma.cwiseProduct(z);
}

int cmd_validate(const CommonArgs& a, std::ostream& out, std::ostream& err) {
  const LoadedConfig cfg = load_config(a.config);
  const ValidationReport rep = validate_system(cfg.system, cfg.netload);
  if (!rep.ok()) {
    err << rep.to_string();
    return exit_invalid;
  }
  out << "ok: " << cfg.system.network.node_count << " nodes, " << cfg.system.network.line_count()
      << " lines, " << cfg.system.generators.size() << " generators, "
      << cfg.system.storages.size() << " storages, horizon " << cfg.system.config.horizon << "\n";
  if (!rep.slack_note.empty()) out << rep.slack_note << "\n";
  out << "config hash " << config_hash(cfg) << "\n";
  return exit_ok;
}

int cmd_bounds(const CommonArgs& a, std::ostream& out, std::ostream& err) {
  LoadedConfig cfg = load_validated(a, err);
  const PowerSystem& sys = cfg.system;
  const double eps = a.epsilon.empty() ? sys.config.epsilon : a.epsilon.front();
  if (!(eps > 0.0 && eps <= 0.5)) throw ValidationError("epsilon must lie in (0, 0.5]");
  const std::string dir = resolve_out(a, "bounds");
  ensure_dir(dir);
  const std::uint64_t seed = a.seed.value_or(get_or<std::uint64_t>(
      get_or<json>(cfg.raw, "simulation", json::object()), "seed", 1));

  DispatchOptions opt;
  opt.epsilon = eps;
  opt.mode = a.fix_and_resolve ? Complementarity::fix_and_resolve : Complementarity::relaxed;
  std::vector<std::pair<int, BoundSeries>> series;
  if (a.mode == "da") {
    const DispatchSolution sol = run_dispatch(sys, cfg.netload, opt);
    series.emplace_back(0, extract_bounds(sys, sol, BoundTag::da));
    write_lmp_csv((fs::path(dir) / "lmp.csv").string(), sol);
  } else if (a.mode == "hindsight") {
    NetloadModel realized = cfg.netload;
    realized.mu = sample_realized(cfg.netload, seed);
    opt.hindsight = true;
    const DispatchSolution sol = run_dispatch(sys, realized, opt);
    series.emplace_back(0, extract_bounds(sys, sol, BoundTag::hindsight));
    write_lmp_csv((fs::path(dir) / "lmp.csv").string(), sol);
  } else if (a.mode == "rolling") {
    const Eigen::MatrixXd realized = sample_realized(cfg.netload, seed);
    const RollingResult rr = rolling_bounds(sys, cfg.netload, eps, realized, linear_decay(), true);
    for (std::size_t k = 0; k < rr.rt.size(); ++k) series.emplace_back(static_cast<int>(k), rr.rt[k]);
    write_lmp_csv((fs::path(dir) / "lmp.csv").string(), rr.da_solution);
  } else {
    throw ValidationError("unknown mode '" + a.mode + "' (da, rolling, hindsight)");
  }
  write_bounds_csv((fs::path(dir) / "bounds.csv").string(), sys, series);
  double top = 0.0;
  for (const auto& [k, s] : series) top = std::max(top, s.ceiling.maxCoeff());
  out << "mode " << a.mode << ", epsilon " << csv::fmt(eps) << ", max bound " << csv::fmt(top)
      << " -> " << dir << "\n";
  return exit_ok;
}

int cmd_policy(const CommonArgs& a, std::ostream& out, std::ostream& err) {
  LoadedConfig cfg = load_validated(a, err);
  const PowerSystem& sys = cfg.system;
  const PriceModelConfig pc = parse_price(cfg.raw);
  if (sys.storages.empty()) throw ValidationError("system has no storage");
  const std::string id = a.storage.empty() ? sys.storages.front().id : a.storage;
  const int s = sys.storage_index(id);
  if (s < 0) throw ValidationError("unknown storage id '" + id + "'");
  const Storage& st = sys.storages[s];
  const double scale = a.sigma_scale.empty() ? 1.0 : a.sigma_scale.front();
  if (scale < 0.0) throw ValidationError("sigma scale must be >= 0");
  const std::uint64_t seed = a.seed.value_or(get_or<std::uint64_t>(
      get_or<json>(cfg.raw, "simulation", json::object()), "seed", 1));

  DispatchOptions opt;
  opt.epsilon = a.epsilon.empty() ? sys.config.epsilon : a.epsilon.front();
  const DispatchSolution sol = run_dispatch(sys, cfg.netload, opt);
  const BoundSeries da = extract_bounds(sys, sol, BoundTag::da);
  const Eigen::VectorXd dap = da.lmp.row(s).transpose();
  const int T = static_cast<int>(dap.size());

  MarkovPriceModel model = MarkovPriceModel::deterministic(dap);
  if (scale > 0.0 && pc.baseline_sigma > 0.0) {
    const auto set = generate_rtp_scenarios(dap, Eigen::VectorXd::Constant(T, pc.baseline_sigma),
                                            pc.scenarios, derive_seed(derive_seed(seed, 3), s), pc.ar1);
    model = fit_markov(set, pc.n_bins).scaled(dap, scale);
  }
  TrainOptions topt;
  topt.soc_points = pc.soc_points;
  ValueFunction vf = train_value_function(model, st, topt);
  vf.storage_id = st.id;

  const std::string dir = resolve_out(a, "policy");
  ensure_dir(dir);
  write_value_function_csv((fs::path(dir) / "value_function.csv").string(), vf);
  std::ofstream os((fs::path(dir) / "policy.csv").string(), std::ios::binary);
  if (!os) throw IoError("cannot write policy.csv in " + dir);
  csv::Writer w(os);
  w.header({"storage", "t", "state", "price", "e", "c1", "c2", "c3", "c4", "case", "p", "b"});
  for (int t = 0; t < vf.periods(); ++t)
    for (int j = 0; j < vf.states(t); ++j) {
      const double price = vf.levels[t](j);
      for (int i = 0; i < vf.grid.n; ++i) {
        const double e = vf.grid.point(i);
        const Breakpoints bp = breakpoints(vf.grid, vf.v[t][j], st, e);
        const PolicyDecision d = control_policy(vf.grid, vf.v[t][j], price, e, st);
        w.field(st.id).field(t).field(j).field(price).field(e).field(bp.c1).field(bp.c2);
        w.field(bp.c3).field(bp.c4).field(static_cast<int>(d.trigger_case)).field(d.p).field(d.b);
        w.end_row();
      }
    }
  out << "storage " << st.id << ", sigma scale " << csv::fmt(scale) << ", max v "
      << csv::fmt(vf.max_abs()) << " -> " << dir << "\n";
  return exit_ok;
}

int cmd_simulate(const CommonArgs& a, std::ostream& out, std::ostream& err) {
  const auto t0 = std::chrono::steady_clock::now();
  LoadedConfig cfg = load_validated(a, err);
  const PowerSystem& sys = cfg.system;
  const PriceModelConfig pc = parse_price(cfg.raw);
  const ExperimentPlan plan = parse_plan(cfg, a);
  const std::string dir = resolve_out(a, "simulate");
  ensure_dir(dir);
  const fs::path manifest_path = fs::path(dir) / "manifest.json";
  const fs::path partial_path = fs::path(dir) / "results.partial.csv";
  const int ns = static_cast<int>(sys.storages.size());
  const std::string hash = config_hash(cfg);
  const json pj = plan_json(plan);

  json manifest{{"config_path", fs::absolute(a.config).string()},
                {"config_hash", hash},
                {"seed", plan.seed},
                {"plan", pj},
                {"output_dir", fs::absolute(dir).string()},
                {"version", version_string()},
                {"started", timestamp()},
                {"completed_cells", json::array()},
                {"failures", json::array()}};

  std::set<std::pair<int, int>> skip;
  std::vector<RunMetrics> previous;
  if (!a.fresh && fs::exists(manifest_path) && fs::exists(partial_path)) {
    json old;
    try {
      std::ifstream is(manifest_path);
      old = json::parse(is);
    } catch (const json::exception& e) {
      throw IoError(manifest_path.string() + ": " + e.what());
    }
    if (old.value("config_hash", "") == hash && old.value("plan", json()) == pj) {
      for (const auto& c : old["completed_cells"]) skip.insert({c[0].get<int>(), c[1].get<int>()});
      previous = read_results_csv(partial_path.string(), ns);
      std::erase_if(previous, [&](const RunMetrics& m) { return !skip.count({m.da_id, m.rt_id}); });
      manifest["started"] = old.value("started", manifest["started"].get<std::string>());
      manifest["completed_cells"] = old["completed_cells"];
      out << "resuming: " << skip.size() << " cells already complete\n";
    }
  }
  write_results_csv(partial_path.string(), sys, previous);
  write_json(manifest_path.string(), manifest);

  std::ofstream partial(partial_path, std::ios::binary | std::ios::app);
  const int total = plan.da_scenarios * plan.rt_per_da;
  int done = static_cast<int>(skip.size());
  auto on_cell = [&](int da, int rt, const std::vector<RunMetrics>& rows,
                     const std::optional<CellFailure>& failure) {
    if (failure) {
      manifest["failures"].push_back({{"da_id", da}, {"rt_id", rt}, {"message", failure->message}});
      err << "cell da=" << da << " rt=" << rt << " failed: " << failure->message << "\n";
    } else {
      csv::Writer w(partial);
      for (const auto& m : rows) {
        w.field(m.da_id).field(m.rt_id).field(to_string(m.toggle)).field(m.sigma_scale).field(m.eps);
        w.field(m.withholding).field(m.system_cost);
        for (double p : m.profit) w.field(p);
        w.field(m.profit_total).field(m.hindsight_cost).field(m.gap).field(m.response_mwh);
        w.field(m.response_peak_mwh).field(m.coverage).field(m.mean_bound).field(m.shed_mwh);
        w.field(m.adjust_flags).field(m.flagged);
        w.end_row();
      }
      partial.flush();
      manifest["completed_cells"].push_back({da, rt});
      ++done;
      out << "cell da=" << da << " rt=" << rt << " done (" << done << "/" << total << ")\n";
    }
    write_json(manifest_path.string(), manifest);
  };
  ExperimentResult res = run_experiment(sys, cfg.netload, pc, plan, skip, on_cell);
  partial.close();

  res.rows.insert(res.rows.end(), previous.begin(), previous.end());
  sort_canonical(res.rows);
  write_results_csv((fs::path(dir) / "results.csv").string(), sys, res.rows);
  if (!res.rows.empty()) {
    const Summary sum = summarize(res.rows, plan.label);
    write_summary_csv((fs::path(dir) / "summary.csv").string(), sum);
    for (const auto& n : sum.notes) err << "note: " << n << "\n";
  }
  manifest["finished"] = timestamp();
  manifest["cells_total"] = res.cells_total;
  manifest["cells_done"] = res.cells_done;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  manifest["runtime_seconds"] = secs;
  write_json(manifest_path.string(), manifest);
  out << res.rows.size() << " result rows, " << res.cells_done << "/" << res.cells_total
      << " cells, " << std::fixed << std::setprecision(1) << secs << " s -> " << dir << "\n";
  return res.completion() >= 0.9 ? exit_ok : exit_incomplete;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Opportunity-cost bounds for storage bidding"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);
  CommonArgs a;

  auto add_config = [&](CLI::App* c) {
    c->add_option("--config", a.config, "JSON configuration")->required();
  };
  auto* validate = app.add_subcommand("validate", "Check a configuration");
  add_config(validate);

  auto* bounds = app.add_subcommand("bounds", "Solve the dispatch and export opportunity-cost bounds");
  add_config(bounds);
  bounds->add_option("--epsilon", a.epsilon, "Violation probability");
  bounds->add_option("--mode", a.mode, "da, rolling or hindsight")
      ->check(CLI::IsMember({"da", "rolling", "hindsight"}));
  bounds->add_option("--out", a.out, "Output directory");
  bounds->add_option("--seed", a.seed, "Seed for the realized netload");
  bounds->add_flag("--fix-and-resolve", a.fix_and_resolve, "Enforce charge/discharge exclusivity");

  auto* simulate = app.add_subcommand("simulate", "Run the market experiment");
  add_config(simulate);
  simulate->add_option("--out", a.out, "Output directory");
  simulate->add_option("--seed", a.seed, "Master seed");
  simulate->add_option("--workers", a.workers, "Parallel cells");
  simulate->add_option("--epsilon", a.epsilon, "Violation probabilities")->delimiter(',');
  simulate->add_option("--sigma-scale", a.sigma_scale, "Price spread multipliers")->delimiter(',');
  simulate->add_option("--withholding", a.withholding, "Discharge offer multipliers")->delimiter(',');
  simulate->add_option("--toggles", a.toggles, "original, adjusted, capped or both");
  simulate->add_option("--da", a.da_scenarios, "DA scenario count");
  simulate->add_option("--rt", a.rt_per_da, "RT scenarios per DA scenario");
  simulate->add_flag("--fresh", a.fresh, "Ignore completed cells from an earlier run");

  auto* policy = app.add_subcommand("policy", "Train and export a storage value function");
  add_config(policy);
  policy->add_option("--storage", a.storage, "Storage id");
  policy->add_option("--sigma-scale", a.sigma_scale, "Price spread multiplier");
  policy->add_option("--epsilon", a.epsilon, "Violation probability for the day-ahead dispatch");
  policy->add_option("--seed", a.seed, "Price scenario seed");
  policy->add_option("--out", a.out, "Output directory");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? exit_ok : exit_usage;
  }

  try {
    if (*validate) return cmd_validate(a, out, err);
    if (*bounds) return cmd_bounds(a, out, err);
    if (*simulate) return cmd_simulate(a, out, err);
    if (*policy) return cmd_policy(a, out, err);
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return exit_io;
  } catch (const InfeasibleError& e) {
    err << "infeasible (" << e.cause << ", k=" << e.k << "): " << e.what() << "\n";
    return exit_infeasible;
  } catch (const ValidationError& e) {
    err << "invalid: " << e.what() << "\n";
    return exit_invalid;
  } catch (const json::exception& e) {
    err << "invalid: " << e.what() << "\n";
    return exit_invalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_invalid;
  }
  return exit_usage;
}

}  // namespace esb
