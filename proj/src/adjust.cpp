#include "esbound/adjust.hpp"

#include "esbound/csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>

namespace esb {

double bound_excess(const ValueFunction& vf, const Eigen::VectorXd& bound) {
  double worst = -std::numeric_limits<double>::infinity();
  for (int t = vf.t_from; t < vf.periods(); ++t)
    for (const auto& curve : vf.v[t]) worst = std::max(worst, curve.maxCoeff() - bound(t));
  return worst;
}

int bisection_budget(const Eigen::VectorXd& sigma_da, double delta) {
  const double smax = sigma_da.size() ? sigma_da.maxCoeff() : 0.0;
  if (smax <= delta) return 0;
  return static_cast<int>(std::ceil(std::log2(smax / delta)));
}

namespace {

struct Evaluator {
  const Eigen::VectorXd& bound;
  const Eigen::VectorXd& dap;
  const Storage& storage;
  const MarkovPriceModel& base;
  const AdjustConfig& cfg;
  int retrains = 0;

  ValueFunction train(const Eigen::VectorXd& m) {
    ++retrains;
    TrainOptions opt;
    opt.soc_points = cfg.soc_points;
    opt.t_from = cfg.t_from;
    return train_value_function(base.scaled(dap, m), storage, opt);
  }
  // Only periods from `from` on are checked.
  bool violates(const ValueFunction& vf, int from = 0) const {
    double worst = -std::numeric_limits<double>::infinity();
    for (int t = std::max(from, vf.t_from); t < vf.periods(); ++t)
      for (const auto& curve : vf.v[t]) worst = std::max(worst, curve.maxCoeff() - bound(t));
    return worst > cfg.tol;
  }
};

}  // namespace

AdjustResult identify_interval(const Eigen::VectorXd& bound, const Eigen::VectorXd& sigma_da,
                               const Eigen::VectorXd& dap, const Storage& storage,
                               const MarkovPriceModel& base, const AdjustConfig& cfg) {
  const int T = static_cast<int>(dap.size());
  if (!(cfg.delta > 0.0)) throw ValidationError("delta must be > 0");
  if (bound.size() != T || sigma_da.size() != T || base.periods() != T)
    throw ValidationError("identify_interval: horizon lengths differ");
  if ((sigma_da.array() < 0.0).any()) throw ValidationError("sigma_da must be >= 0");
  const double smax = sigma_da.maxCoeff();
  if (cfg.max_iter < bisection_budget(sigma_da, cfg.delta))
    throw ValidationError("max_iter below the bisection budget");

  Evaluator ev{bound, dap, storage, base, cfg};
  AdjustResult res;
  res.multipliers = Eigen::VectorXd::Ones(T);

  // Bisect one coordinate set (all periods in `mask`) while others keep their values.
  auto bisect = [&](const std::vector<int>& mask, double upper,
                    int from) -> std::optional<ValueFunction> {
    double lo = 0.0, hi = upper;
    std::optional<ValueFunction> lo_vf;
    auto with = [&](double m) {
      Eigen::VectorXd mv = res.multipliers;
      for (int t : mask) mv(t) = m;
      return mv;
    };
    double width_scale = 0.0;
    for (int t : mask) width_scale = std::max(width_scale, sigma_da(t));
    while (width_scale * (hi - lo) > cfg.delta && res.iterations < cfg.max_iter) {
      const double mid = 0.5 * (lo + hi);
      ValueFunction vf = ev.train(with(mid));
      const bool bad = ev.violates(vf, from);
      ++res.iterations;
      if (bad) {
        hi = mid;
      } else {
        lo = mid;
        lo_vf = std::move(vf);
      }
      res.trace.push_back({res.iterations, lo, hi, bad});
    }
    const double mid = 0.5 * (lo + hi);
    ValueFunction vf = ev.train(with(mid));
    if (!ev.violates(vf, from)) {
      for (int t : mask) res.multipliers(t) = mid;
      return vf;
    }
    if (!lo_vf) {
      lo_vf = ev.train(with(0.0));
      if (ev.violates(*lo_vf, from)) res.flagged = true;
    }
    for (int t : mask) res.multipliers(t) = lo;
    return lo_vf;
  };

  std::optional<ValueFunction> vf;
  if (cfg.scope == AdjustScope::trajectory || smax == 0.0) {
    std::vector<int> all;
    for (int t = 0; t < T; ++t) all.push_back(t);
    vf = bisect(all, 1.0, 0);
  } else {
    // Last period first. The check for period t starts at t - 1.
    for (int t = T - 1; t >= cfg.t_from; --t) {
      if (sigma_da(t) == 0.0) continue;
      vf = bisect({t}, res.multipliers(t), t - 1);
    }
    if (!vf) vf = ev.train(res.multipliers);
  }
  res.value_function = std::move(*vf);
  res.multiplier = res.multipliers.maxCoeff();
  res.sigma_star = res.multipliers.cwiseProduct(sigma_da);
  res.retrains = ev.retrains;
  return res;
}

AdjustResult identify_interval(const Eigen::VectorXd& bound, const Eigen::VectorXd& sigma_da,
                               const Eigen::VectorXd& dap, const Storage& storage,
                               const AdjustConfig& config) {
  const PriceScenarioSet set =
      generate_rtp_scenarios(dap, sigma_da, config.n_scenarios, config.seed, config.ar1);
  const MarkovPriceModel base = (sigma_da.array() == 0.0).all()
                                    ? MarkovPriceModel::deterministic(dap)
                                    : fit_markov(set, config.n_bins);
  return identify_interval(bound, sigma_da, dap, storage, base, config);
}

BidCurve cap_bids(const BidCurve& bids, double theta, const Storage& storage) {
  const double eta = storage.efficiency;
  BidCurve out = bids;
  for (auto& seg : out.discharge) seg.price = std::min(seg.price, storage.marginal_cost + theta / eta);
  for (auto& seg : out.charge) seg.price = std::min(seg.price, theta * eta);
  return out;
}

void write_adjust_trace_csv(const std::string& path, const std::vector<AdjustTraceRow>& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  csv::Writer w(out);
  w.header({"iteration", "m_lo", "m_hi", "violated"});
  for (const auto& r : trace) {
    w.field(r.iteration).field(r.m_lo).field(r.m_hi).field(r.violated);
    w.end_row();
  }
}

}  // namespace esb
