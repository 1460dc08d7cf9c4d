#include "esbound/ced.hpp"
#include "esbound/csv.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace esb;

namespace {

PowerSystem one_bus(double load_cap = 100.0) {
  PowerSystem sys;
  sys.network.node_count = 1;
  sys.network.ptdf = Eigen::MatrixXd::Zero(0, 1);
  sys.generators = {{0, 0.01, 20.0, load_cap, 0.0, load_cap, load_cap}};
  sys.config.horizon = 2;
  return sys;
}

NetloadModel constant_netload(int nodes, int T, double mu, double sigma = 0.0) {
  return {Eigen::MatrixXd::Constant(nodes, T, mu), Eigen::MatrixXd::Constant(nodes, T, sigma), {}};
}

// Two buses joined by one 30 MWh line, cheap supply at bus 0, load at bus 1.
PowerSystem two_bus() {
  PowerSystem sys;
  sys.network.node_count = 2;
  sys.network.lines = {{0, 1, 30.0, 1.0}};
  sys.network.ptdf = compute_ptdf(2, sys.network.lines, 0);
  sys.generators = {{0, 0.01, 10.0, 200.0, 0.0, 200.0, 200.0}, {1, 0.02, 40.0, 200.0, 0.0, 200.0, 200.0}};
  sys.config.horizon = 2;
  return sys;
}

}  // namespace

TEST_CASE("single generator price equals marginal cost") {
  const PowerSystem sys = one_bus();
  DispatchOptions opt;
  const DispatchSolution sol = run_dispatch(sys, constant_netload(1, 2, 50.0), opt);
  REQUIRE(sol.clean());
  CHECK(sol.g(0, 0) == doctest::Approx(50.0).epsilon(1e-7));
  CHECK(sol.duals.lambda(0) == doctest::Approx(21.0).epsilon(1e-7));
  CHECK(sol.objective == doctest::Approx(2 * (0.01 * 2500 + 20 * 50)).epsilon(1e-8));
}

TEST_CASE("quantile inflation of the balance right-hand side") {
  const PowerSystem sys = one_bus(1000.0);
  DispatchOptions opt;
  opt.epsilon = 0.1;
  SUBCASE("zero sigma collapses to the mean") {
    const DispatchProblem p = build_dispatch(sys, constant_netload(1, 2, 50.0, 0.0), opt);
    CHECK(p.balance_rhs(0) == doctest::Approx(50.0));
  }
  SUBCASE("median ignores sigma") {
    opt.epsilon = 0.5;
    const DispatchProblem p = build_dispatch(sys, constant_netload(1, 2, 50.0, 30.0), opt);
    CHECK(p.balance_rhs(0) == doctest::Approx(50.0));
  }
  SUBCASE("sigma 100 adds one hundred 90% quantiles") {
    const DispatchProblem p = build_dispatch(sys, constant_netload(1, 2, 200.0, 100.0), opt);
    CHECK(p.balance_rhs(0) - 200.0 == doctest::Approx(128.15515655446004).epsilon(1e-10));
    const DispatchSolution sol = solve_dispatch(p);
    CHECK(sol.g(0, 0) == doctest::Approx(328.15515655446004).epsilon(1e-8));
  }
}

TEST_CASE("idle storage when the spread does not cover losses") {
  PowerSystem sys = one_bus(200.0);
  sys.generators[0].cost_quad = 0.0;
  sys.storages = {{"s", 0, 10.0, 40.0, 0.0, 0.9, 1.0, 0.0}};
  sys.config.horizon = 4;
  NetloadModel nl = constant_netload(1, 4, 50.0);
  nl.mu(0, 2) = 80.0;  // price stays flat with linear cost
  DispatchOptions opt;
  const DispatchSolution sol = run_dispatch(sys, nl, opt);
  REQUIRE(sol.clean());
  CHECK(sol.p.cwiseAbs().maxCoeff() < 1e-6);
  CHECK(sol.b.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("congested two-bus prices") {
  const PowerSystem sys = two_bus();
  NetloadModel nl = constant_netload(2, 2, 0.0);
  nl.mu.row(1).setConstant(100.0);
  const DispatchSolution sol = run_dispatch(sys, nl, DispatchOptions{});
  REQUIRE(sol.clean());
  CHECK(sol.g(0, 0) == doctest::Approx(30.0).epsilon(1e-6));
  CHECK(sol.g(1, 0) == doctest::Approx(70.0).epsilon(1e-6));
  // Marginal units are interior, so each bus price is its generator's marginal cost.
  CHECK(sol.lmp(0, 0) == doctest::Approx(10.6).epsilon(1e-6));
  CHECK(sol.lmp(1, 0) == doctest::Approx(42.8).epsilon(1e-6));
  const double mu = sol.duals.omega_hi(0, 0) - sol.duals.omega_lo(0, 0);
  const double dpi = sys.network.ptdf(0, 0) - sys.network.ptdf(0, 1);
  CHECK(sol.lmp(1, 0) - sol.lmp(0, 0) == doctest::Approx(mu * dpi).epsilon(1e-8));
  CHECK(compute_lmp(sys, sol, 1, 0) == doctest::Approx(sol.lmp(1, 0)));
}

TEST_CASE("uncongested network shares one price") {
  const PowerSystem sys = test::three_node_system();
  NetloadModel nl = test::three_node_netload();
  nl.mu *= 0.5;
  const DispatchSolution sol = run_dispatch(sys, nl, DispatchOptions{});
  REQUIRE(sol.clean());
  CHECK(sol.duals.omega_hi.cwiseAbs().maxCoeff() < 1e-6);
  CHECK(sol.duals.omega_lo.cwiseAbs().maxCoeff() < 1e-6);
  for (int t = 0; t < sol.W(); ++t)
    CHECK(sol.lmp.col(t).maxCoeff() - sol.lmp.col(t).minCoeff() < 1e-6);
}

TEST_CASE("dispatch solution contracts on the fixture") {
  const PowerSystem sys = test::three_node_system();
  const NetloadModel nl = test::three_node_netload();
  const DispatchSolution sol = run_dispatch(sys, nl, DispatchOptions{});
  REQUIRE(sol.clean());
  double cost = 0.0;
  for (int t = 0; t < sol.W(); ++t) {
    for (std::size_t i = 0; i < sys.generators.size(); ++i) cost += sys.generators[i].cost(sol.g(i, t));
    cost += sys.storages[0].marginal_cost * sol.p(0, t);
  }
  CHECK(sol.objective == doctest::Approx(cost).epsilon(1e-6));
  const DualSet& d = sol.duals;
  CHECK(d.lambda.minCoeff() >= -1e-6);
  for (const Eigen::MatrixXd* m : {&d.omega_hi, &d.omega_lo, &d.nu_lo, &d.nu_hi, &d.kappa_up,
                                   &d.kappa_dn, &d.alpha_lo, &d.alpha_hi, &d.beta_lo, &d.beta_hi,
                                   &d.iota_lo, &d.iota_hi})
    if (m->size()) CHECK(m->minCoeff() >= -1e-6);
  // SoC dynamics hold along the solved trajectory.
  const Storage& st = sys.storages[0];
  double e = st.e_init;
  for (int t = 0; t < sol.W(); ++t) {
    e = e - sol.p(0, t) / st.efficiency + sol.b(0, t) * st.efficiency;
    CHECK(sol.e(0, t) == doctest::Approx(e).epsilon(1e-6));
  }
  const auto checks = bound_formula_check(sys, sol);
  REQUIRE(checks.size() == 1);
  CHECK(checks[0].ok);
}

TEST_CASE("bound formula with lossless storage reduces to the price ceiling") {
  PowerSystem sys = test::three_node_system();
  sys.storages[0].efficiency = 1.0;
  sys.storages[0].marginal_cost = 0.0;
  const DispatchSolution sol = run_dispatch(sys, test::three_node_netload(), DispatchOptions{});
  const auto c = bound_formula_check(sys, sol);
  CHECK(c[0].bound == doctest::Approx(c[0].max_lmp));
  CHECK(c[0].max_theta <= c[0].max_lmp + 1e-6);
}

TEST_CASE("undispatched storage stays below the price ceiling") {
  PowerSystem sys = test::three_node_system();
  sys.storages[0].marginal_cost = 500.0;
  sys.storages[0].efficiency = 0.5;
  const DispatchSolution sol = run_dispatch(sys, test::three_node_netload(), DispatchOptions{});
  CHECK(sol.p.cwiseAbs().maxCoeff() < 1e-5);
  const auto c = bound_formula_check(sys, sol);
  CHECK(c[0].max_theta <= c[0].max_lmp * sys.storages[0].efficiency + 1e-6);
}

TEST_CASE("hindsight and zero-sigma dispatch give identical bounds") {
  const PowerSystem sys = test::three_node_system();
  NetloadModel nl = test::three_node_netload();
  nl.sigma.setZero();
  DispatchOptions opt;
  const BoundSeries rt = extract_bounds(sys, run_dispatch(sys, nl, opt), BoundTag::rt);
  opt.hindsight = true;
  const BoundSeries h = extract_bounds(sys, run_dispatch(sys, nl, opt), BoundTag::hindsight);
  CHECK((rt.theta - h.theta).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("tighter risk level raises the bound") {
  const PowerSystem sys = test::three_node_system();
  const NetloadModel nl = test::three_node_netload(24, 0.12);
  DispatchOptions a, b;
  a.epsilon = 0.05;
  b.epsilon = 0.2;
  const double ba = extract_bounds(sys, run_dispatch(sys, nl, a)).ceiling(0);
  const double bb = extract_bounds(sys, run_dispatch(sys, nl, b)).ceiling(0);
  CHECK(ba >= bb - 1e-6);
}

TEST_CASE("rolling bounds") {
  const PowerSystem sys = test::three_node_system();
  const NetloadModel nl = test::three_node_netload();
  Eigen::MatrixXd realized = nl.mu;
  // Deviations stay inside the day-ahead uncertainty set.
  for (int t = 0; t < 24; ++t) realized.col(t) += 0.5 * nl.sigma.col(t) * std::sin(0.7 * t);

  SUBCASE("no forecast error left reproduces the hindsight ceiling") {
    const RollingResult r = rolling_bounds(sys, nl, 0.1, realized, [](int) { return 0.0; });
    REQUIRE(r.rt.size() == 24);
    for (int k = 0; k < 24; ++k) {
      const double hk = r.hindsight_tail[k].ceiling(0);
      CHECK(r.rt[k].ceiling(0) == doctest::Approx(hk).epsilon(1e-5));
    }
  }
  SUBCASE("undecayed forecasts stay below the day-ahead ceiling") {
    const RollingResult r = rolling_bounds(sys, nl, 0.1, realized, [](int) { return 1.0; });
    for (int k = 0; k < 24; ++k) CHECK(r.rt[k].ceiling(0) <= r.da.ceiling(0) + 1e-6);
  }
  SUBCASE("bounds csv has one row per rolling step, storage and remaining period") {
    const RollingResult r = rolling_bounds(sys, nl, 0.1, realized, linear_decay());
    std::vector<std::pair<int, BoundSeries>> series;
    for (int k = 0; k < 24; ++k) series.emplace_back(0, r.rt[k]);
    const auto path = (std::filesystem::temp_directory_path() / "esb_bounds.csv").string();
    write_bounds_csv(path, sys, series);
    const csv::Table t = csv::read_table(path);
    CHECK(t.header == std::vector<std::string>{"scenario_id", "k", "s", "t", "theta", "B", "lmp_node", "lambda_eps"});
    CHECK(t.rows.size() == 24 * 25 / 2);
    for (const auto& row : t.rows) CHECK(std::stoi(row[3]) >= std::stoi(row[1]));
    std::filesystem::remove(path);
  }
}

TEST_CASE("rolling forecast blends toward the realization") {
  const NetloadModel nl = test::three_node_netload(6);
  const Eigen::MatrixXd realized = nl.mu * 1.1;
  const NetloadModel f = rolling_forecast(nl, realized, 2, linear_decay(2));
  CHECK(f.sigma.leftCols(3).cwiseAbs().maxCoeff() == 0.0);
  CHECK((f.mu.leftCols(3) - realized.leftCols(3)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((f.sigma.col(3) - 0.5 * nl.sigma.col(3)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((f.mu.col(3) - 0.5 * (nl.mu.col(3) + realized.col(3))).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((f.sigma.col(5) - nl.sigma.col(5)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fix-and-resolve removes simultaneous charge and discharge") {
  PowerSystem sys = test::three_node_system();
  sys.storages[0].efficiency = 1.0;
  sys.storages[0].marginal_cost = 0.0;
  NetloadModel nl = test::three_node_netload();
  DispatchOptions opt;
  opt.mode = Complementarity::fix_and_resolve;
  const DispatchSolution sol = run_dispatch(sys, nl, opt);
  REQUIRE(sol.clean());
  CHECK((sol.p.array() * sol.b.array()).maxCoeff() <= 1e-4);
  CHECK(sol.fix_rounds <= 3);
}

TEST_CASE("infeasibility causes are diagnosed") {
  SUBCASE("balance") {
    const PowerSystem sys = one_bus(100.0);
    try {
      run_dispatch(sys, constant_netload(1, 2, 150.0), DispatchOptions{});
      FAIL("expected infeasibility");
    } catch (const InfeasibleError& e) {
      CHECK(e.cause == "balance");
    }
  }
  SUBCASE("flow") {
    PowerSystem sys = two_bus();
    sys.generators[1].g_max = 10.0;
    sys.generators[1].ramp_up = sys.generators[1].ramp_down = 10.0;
    NetloadModel nl = constant_netload(2, 2, 0.0);
    nl.mu.row(1).setConstant(100.0);
    try {
      run_dispatch(sys, nl, DispatchOptions{});
      FAIL("expected infeasibility");
    } catch (const InfeasibleError& e) {
      CHECK(e.cause == "flow");
    }
  }
  SUBCASE("ramp") {
    PowerSystem sys = one_bus(200.0);
    sys.generators[0].ramp_up = 10.0;
    DispatchOptions opt;
    opt.history = DispatchHistory{Eigen::VectorXd::Constant(1, 50.0), Eigen::VectorXd::Zero(0)};
    try {
      run_dispatch(sys, constant_netload(1, 2, 150.0), opt);
      FAIL("expected infeasibility");
    } catch (const InfeasibleError& e) {
      CHECK(e.cause == "ramp");
    }
  }
}

TEST_CASE("problem dump lists every block") {
  const PowerSystem sys = one_bus();
  const DispatchProblem p = build_dispatch(sys, constant_netload(1, 2, 50.0), DispatchOptions{});
  const auto path = (std::filesystem::temp_directory_path() / "esb_dump.txt").string();
  write_problem_dump(path, p);
  std::ifstream in(path);
  std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  for (const char* key : {"matrix Q", "vector c", "matrix A", "vector b", "matrix G", "vector h",
                          "vector lb", "vector ub"})
    CHECK(all.find(key) != std::string::npos);
  std::filesystem::remove(path);
}

TEST_CASE("window arguments are validated") {
  const PowerSystem sys = one_bus();
  DispatchOptions opt;
  opt.epsilon = 0.7;
  CHECK_THROWS_AS(build_dispatch(sys, constant_netload(1, 2, 50.0), opt), ValidationError);
  opt.epsilon = 0.1;
  opt.window_start = 5;
  CHECK_THROWS_AS(build_dispatch(sys, constant_netload(1, 2, 50.0), opt), ValidationError);
}
