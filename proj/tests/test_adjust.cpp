#include "esbound/adjust.hpp"
#include "esbound/csv.hpp"

#include <doctest.h>

#include <filesystem>

using namespace esb;

namespace {

struct Instance {
  Storage storage{"s", 0, 5.0, 20.0, 0.0, 0.9, 2.0, 0.0};
  Eigen::VectorXd dap;
  Eigen::VectorXd sigma;
  MarkovPriceModel base;
  AdjustConfig cfg;

  Instance() {
    dap.resize(6);
    dap << 20.0, 25.0, 40.0, 60.0, 35.0, 22.0;
    sigma = Eigen::VectorXd::Constant(6, 10.0);
    base = fit_markov(generate_rtp_scenarios(dap, sigma, 200, 11), 5);
    cfg.delta = 0.01;
    cfg.soc_points = 21;
  }
  // Largest marginal value per period.
  Eigen::VectorXd vmax(double m) const {
    TrainOptions opt;
    opt.soc_points = cfg.soc_points;
    const ValueFunction vf = train_value_function(base.scaled(dap, m), storage, opt);
    Eigen::VectorXd out = Eigen::VectorXd::Constant(vf.periods(), -1e300);
    for (int t = 0; t < vf.periods(); ++t)
      for (const auto& c : vf.v[t]) out(t) = std::max(out(t), c.maxCoeff());
    return out;
  }
};

}  // namespace

TEST_CASE("bisection budget") {
  CHECK(bisection_budget(Eigen::VectorXd::Constant(3, 20.0), 0.01) == 11);
  CHECK(bisection_budget(Eigen::VectorXd::Constant(3, 0.005), 0.01) == 0);
  CHECK(bisection_budget(Eigen::VectorXd::Zero(3), 0.01) == 0);
}

TEST_CASE("a loose bound keeps the full spread") {
  Instance in;
  const AdjustResult r = identify_interval(Eigen::VectorXd::Constant(6, 1e9), in.sigma, in.dap,
                                           in.storage, in.base, in.cfg);
  CHECK_FALSE(r.flagged);
  CHECK(r.multiplier >= 1.0 - in.cfg.delta / 10.0);
  CHECK(r.iterations <= bisection_budget(in.sigma, in.cfg.delta) + 1);
  CHECK((r.sigma_star - r.multiplier * in.sigma).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("a zero bound with positive prices is flagged") {
  Instance in;
  const AdjustResult r = identify_interval(Eigen::VectorXd::Zero(6), in.sigma, in.dap, in.storage,
                                           in.base, in.cfg);
  CHECK(r.flagged);
  CHECK(r.multiplier == 0.0);
  CHECK(r.iterations <= bisection_budget(in.sigma, in.cfg.delta) + 1);
}

TEST_CASE("an intermediate bound is met within the tolerance") {
  Instance in;
  const Eigen::VectorXd v0 = in.vmax(0.0), v1 = in.vmax(1.0);
  REQUIRE((v1 - v0).maxCoeff() > 1.0);
  // Halfway where the spread raises the value, slack elsewhere.
  Eigen::VectorXd mid(6), looser(6);
  for (int t = 0; t < 6; ++t) {
    const bool grows = v1(t) > v0(t);
    mid(t) = grows ? 0.5 * (v0(t) + v1(t)) : std::max(v0(t), v1(t)) + 1.0;
    looser(t) = grows ? 0.5 * (mid(t) + v1(t)) : mid(t);
  }
  const AdjustResult r = identify_interval(mid, in.sigma, in.dap, in.storage, in.base, in.cfg);
  CHECK_FALSE(r.flagged);
  CHECK(r.multiplier > 0.0);
  CHECK(r.multiplier < 1.0);
  CHECK(bound_excess(r.value_function, mid) <= in.cfg.tol);
  CHECK(r.iterations <= bisection_budget(in.sigma, in.cfg.delta) + 1);
  // The trace brackets shrink monotonically.
  for (std::size_t i = 1; i < r.trace.size(); ++i) {
    CHECK(r.trace[i].m_lo >= r.trace[i - 1].m_lo);
    CHECK(r.trace[i].m_hi <= r.trace[i - 1].m_hi);
  }
  SUBCASE("a looser bound never shrinks the spread") {
    const AdjustResult loose = identify_interval(looser, in.sigma, in.dap, in.storage, in.base, in.cfg);
    CHECK(loose.multiplier >= r.multiplier - in.cfg.delta / 10.0);
  }
  SUBCASE("per-period scope also meets the bound") {
    AdjustConfig cfg = in.cfg;
    cfg.scope = AdjustScope::per_period;
    const AdjustResult pp = identify_interval(mid, in.sigma, in.dap, in.storage, in.base, cfg);
    CHECK_FALSE(pp.flagged);
    CHECK(pp.multipliers.minCoeff() >= 0.0);
    CHECK(pp.multipliers.maxCoeff() <= 1.0);
    CHECK(bound_excess(pp.value_function, mid) <= cfg.tol);
  }
}

TEST_CASE("checks only start at the first trained period") {
  Instance in;
  AdjustConfig cfg = in.cfg;
  cfg.t_from = 3;
  Eigen::VectorXd bound = Eigen::VectorXd::Constant(6, 1e9);
  bound.head(3).setZero();
  const AdjustResult r = identify_interval(bound, in.sigma, in.dap, in.storage, in.base, cfg);
  CHECK_FALSE(r.flagged);
  CHECK(r.multiplier >= 1.0 - cfg.delta / 10.0);
}

TEST_CASE("argument checks") {
  Instance in;
  AdjustConfig cfg = in.cfg;
  cfg.max_iter = 3;
  CHECK_THROWS_AS(identify_interval(Eigen::VectorXd::Zero(6), in.sigma, in.dap, in.storage, in.base, cfg),
                  ValidationError);
  cfg = in.cfg;
  cfg.delta = 0.0;
  CHECK_THROWS_AS(identify_interval(Eigen::VectorXd::Zero(6), in.sigma, in.dap, in.storage, in.base, cfg),
                  ValidationError);
  CHECK_THROWS_AS(identify_interval(Eigen::VectorXd::Zero(5), in.sigma, in.dap, in.storage, in.base, in.cfg),
                  ValidationError);
}

TEST_CASE("zero spread needs no bisection") {
  Instance in;
  const AdjustResult r = identify_interval(Eigen::VectorXd::Constant(6, 1e9), Eigen::VectorXd::Zero(6),
                                           in.dap, in.storage, in.cfg);
  CHECK(r.iterations == 0);
  CHECK_FALSE(r.flagged);
  CHECK(r.sigma_star.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("capping bids") {
  const Storage s{"s", 0, 5.0, 20.0, 0.0, 0.95, 10.0, 0.0};
  BidCurve bc;
  bc.discharge = {{1.0, 30.0}, {1.0, 500.0}};
  bc.charge = {{1.0, 500.0}, {1.0, 20.0}};
  const BidCurve c = cap_bids(bc, 50.0, s);
  CHECK(c.discharge[0].price == 30.0);
  CHECK(c.discharge[1].price == doctest::Approx(10.0 + 50.0 / 0.95));
  CHECK(c.charge[0].price == doctest::Approx(47.5));
  CHECK(c.charge[1].price == 20.0);
  CHECK(c.discharge_quantity() == bc.discharge_quantity());
  CHECK(c.charge_quantity() == bc.charge_quantity());

  const BidCurve z = cap_bids(bc, 0.0, s);
  CHECK(z.discharge[1].price == doctest::Approx(10.0));
  CHECK(z.charge[0].price == 0.0);
}

TEST_CASE("trace csv") {
  const std::vector<AdjustTraceRow> trace{{1, 0.0, 0.5, true}, {2, 0.25, 0.5, false}};
  const auto path = (std::filesystem::temp_directory_path() / "esb_trace.csv").string();
  write_adjust_trace_csv(path, trace);
  const csv::Table t = csv::read_table(path);
  CHECK(t.header == std::vector<std::string>{"iteration", "m_lo", "m_hi", "violated"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[1][1] == "0.250000");
  CHECK(t.rows[0][3] == "true");
  std::filesystem::remove(path);
}
