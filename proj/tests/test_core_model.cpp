#include "esbound/core_model.hpp"
#include "esbound/system_io.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace esb;

namespace {

bool has_code(const ValidationReport& r, const std::string& code) {
  return std::any_of(r.violations.begin(), r.violations.end(),
                     [&](const Violation& v) { return v.code == code; });
}

PowerSystem single_node(double g_max) {
  PowerSystem sys;
  sys.network.node_count = 1;
  sys.network.ptdf = Eigen::MatrixXd::Zero(0, 1);
  sys.generators = {{0, 0.0, 20.0, g_max, 0.0, g_max, g_max}};
  sys.config.horizon = 2;
  return sys;
}

NetloadModel flat_netload(int nodes, int T, double mu, double sigma) {
  NetloadModel nl;
  nl.mu = Eigen::MatrixXd::Constant(nodes, T, mu);
  nl.sigma = Eigen::MatrixXd::Constant(nodes, T, sigma);
  return nl;
}

}  // namespace

TEST_CASE("single node with ample capacity passes") {
  const PowerSystem sys = single_node(100.0);
  const ValidationReport r = validate_system(sys, flat_netload(1, 2, 50.0, 0.0));
  CHECK(r.ok());
}

TEST_CASE("insufficient capacity is reported with the period") {
  const PowerSystem sys = single_node(100.0);
  const ValidationReport r = validate_system(sys, flat_netload(1, 2, 150.0, 0.0));
  REQUIRE_FALSE(r.ok());
  CHECK(has_code(r, "capacity"));
  CHECK(r.to_string().find("insufficient capacity at t=0") != std::string::npos);
}

TEST_CASE("capacity check uses the netload quantile") {
  // 95 + 1.2815516 * 10 = 107.8 > 100 at eps = 0.1
  const PowerSystem sys = single_node(100.0);
  CHECK_FALSE(validate_system(sys, flat_netload(1, 2, 95.0, 10.0)).ok());
  CHECK(validate_system(sys, flat_netload(1, 2, 85.0, 10.0)).ok());
}

TEST_CASE("structural violations are named") {
  PowerSystem sys = test::three_node_system();
  NetloadModel nl = test::three_node_netload();

  SUBCASE("empty generator set") {
    sys.generators.clear();
    CHECK(has_code(validate_system(sys, nl), "no_generators"));
  }
  SUBCASE("netload shape") {
    nl.mu.conservativeResize(2, Eigen::NoChange);
    CHECK(has_code(validate_system(sys, nl), "dimension_mismatch"));
  }
  SUBCASE("negative sigma names the cell") {
    nl.sigma(1, 5) = -1.0;
    const ValidationReport r = validate_system(sys, nl);
    CHECK(has_code(r, "netload_sigma"));
    CHECK(r.to_string().find("node 1, t 5") != std::string::npos);
  }
  SUBCASE("nan sigma") {
    nl.sigma(0, 0) = std::nan("");
    CHECK(has_code(validate_system(sys, nl), "netload_sigma"));
  }
  SUBCASE("isolated storage node") {
    sys.network.node_count = 4;
    sys.network.ptdf = Eigen::MatrixXd::Zero(3, 4);
    sys.storages[0].node = 3;
    nl.mu.conservativeResize(4, Eigen::NoChange);
    nl.sigma.conservativeResize(4, Eigen::NoChange);
    nl.mu.row(3).setZero();
    nl.sigma.row(3).setZero();
    CHECK(has_code(validate_system(sys, nl), "isolated_storage_node"));
  }
  SUBCASE("tampered ptdf") {
    sys.network.ptdf(0, 1) += 1e-3;
    CHECK(has_code(validate_system(sys, nl), "ptdf_consistency"));
  }
  SUBCASE("ptdf entry out of range") {
    for (auto& l : sys.network.lines) l.susceptance.reset();
    sys.network.ptdf(0, 1) = 1.5;
    CHECK(has_code(validate_system(sys, nl), "ptdf_range"));
  }
  SUBCASE("storage soc") {
    sys.storages[0].e_init = sys.storages[0].e_max + 1.0;
    CHECK(has_code(validate_system(sys, nl), "storage_soc"));
  }
  SUBCASE("generator limits") {
    sys.generators[0].g_min = sys.generators[0].g_max + 1.0;
    CHECK(has_code(validate_system(sys, nl), "generator_limits"));
  }
  SUBCASE("epsilon") {
    sys.config.epsilon = 0.7;
    CHECK(has_code(validate_system(sys, nl), "epsilon_range"));
  }
}

TEST_CASE("two-bus ptdf") {
  const std::vector<Line> lines{{0, 1, 10.0, 5.0}};
  const Eigen::MatrixXd ptdf = compute_ptdf(2, lines, 0);
  CHECK(ptdf(0, 0) == doctest::Approx(0.0));
  CHECK(std::abs(ptdf(0, 1)) == doctest::Approx(1.0));
}

TEST_CASE("three-bus ring splits flow two thirds to one third") {
  // Unit injection at bus 1, withdrawn at slack bus 0. Direct path reactance 1, loop path 2.
  const std::vector<Line> lines{{0, 1, 10.0, 1.0}, {1, 2, 10.0, 1.0}, {2, 0, 10.0, 1.0}};
  const Eigen::MatrixXd ptdf = compute_ptdf(3, lines, 0);
  CHECK(ptdf(0, 1) == doctest::Approx(-2.0 / 3.0).epsilon(1e-12));
  CHECK(ptdf(1, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(ptdf(2, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  for (int l = 0; l < 3; ++l) CHECK(ptdf(l, 0) == 0.0);
}

TEST_CASE("ptdf columns reproduce unit injections against slack") {
  const PowerSystem sys = test::three_node_system();
  for (int n = 1; n < 3; ++n) {
    Eigen::VectorXd inj = Eigen::VectorXd::Zero(3);
    inj(n) = 1.0;
    inj(0) = -1.0;
    const Eigen::VectorXd flows = dc_power_flow(3, sys.network.lines, 0, inj);
    CHECK((flows - sys.network.ptdf.col(n)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("ptdf flows match a direct power-flow solve for balanced injections") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-50.0, 50.0), b(1.0, 20.0);
  // Random 6-bus meshed network.
  std::vector<Line> lines;
  const int pairs[][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 0}, {0, 3}, {1, 4}};
  for (auto& p : pairs) lines.push_back({p[0], p[1], 100.0, b(rng)});
  for (int slack : {0, 3}) {
    const Eigen::MatrixXd ptdf = compute_ptdf(6, lines, slack);
    CHECK(ptdf.cwiseAbs().maxCoeff() <= 1.0 + 1e-12);
    for (int trial = 0; trial < 20; ++trial) {
      Eigen::VectorXd inj(6);
      for (int i = 0; i < 6; ++i) inj(i) = u(rng);
      inj(0) -= inj.sum();
      const Eigen::VectorXd direct = dc_power_flow(6, lines, slack, inj);
      CHECK((ptdf * inj - direct).cwiseAbs().maxCoeff() < 1e-8);
    }
  }
}

TEST_CASE("disconnected graph is rejected") {
  const std::vector<Line> lines{{0, 1, 10.0, 1.0}};
  CHECK_THROWS_AS(compute_ptdf(3, lines, 0), ValidationError);
}

TEST_CASE("total sigma under independence and correlation") {
  NetloadModel nl = flat_netload(2, 2, 10.0, 0.0);
  nl.sigma.col(0) << 3.0, 4.0;
  CHECK(nl.total_sigma(0) == doctest::Approx(5.0));
  Eigen::MatrixXd corr(2, 2);
  corr << 1.0, 1.0, 1.0, 1.0;
  nl.correlation = corr;
  CHECK(nl.total_sigma(0) == doctest::Approx(7.0));
}

TEST_CASE("bundled example passes validation") {
  const LoadedConfig cfg = load_config(ESBOUND_DATA_DIR "/iso8/system.json");
  CHECK(cfg.system.network.node_count == 8);
  CHECK(cfg.system.network.line_count() == 12);
  CHECK(cfg.system.generators.size() == 76);
  const ValidationReport r = validate_system(cfg.system, cfg.netload);
  CHECK_MESSAGE(r.ok(), r.to_string());
  CHECK(cfg.system.network.ptdf.cwiseAbs().maxCoeff() <= 1.0 + 1e-12);
}

TEST_CASE("config hash is stable and sensitive") {
  const auto dir = std::filesystem::temp_directory_path() / "esb_hash_test";
  std::filesystem::remove_all(dir);
  const PowerSystem sys = test::three_node_system();
  NetloadModel nl = test::three_node_netload();
  const std::string path = test::write_config(dir, sys, nl);
  const std::string h1 = config_hash(load_config(path));
  CHECK(h1 == config_hash(load_config(path)));
  nl.sigma(0, 0) += 1.0;
  test::write_config(dir, sys, nl);
  CHECK(h1 != config_hash(load_config(path)));
  std::filesystem::remove_all(dir);
}

TEST_CASE("missing sidecar is an io error") {
  const auto dir = std::filesystem::temp_directory_path() / "esb_missing_test";
  std::filesystem::remove_all(dir);
  const std::string path = test::write_config(dir, test::three_node_system(), test::three_node_netload());
  std::filesystem::remove(dir / "sigma.csv");
  CHECK_THROWS_AS(load_config(path), IoError);
  std::filesystem::remove_all(dir);
}
