#include "esbound/simulation.hpp"

#include "esbound/csv.hpp"
#include "esbound/price_process.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>
#include <tuple>

namespace esb {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

enum StreamTag : std::uint64_t { kDaForecast = 1, kRtRealization = 2, kPriceScenarios = 3 };

std::uint64_t stream_seed(std::uint64_t master, StreamTag tag, std::uint64_t index) {
  return derive_seed(derive_seed(master, tag), index);
}

Eigen::MatrixXd standard_normal(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = normal(rng);
  return m;
}

double round6(double x) {
  if (!std::isfinite(x)) return x;
  return std::stod(csv::fmt(x));
}

}  // namespace

std::string to_string(Toggle t) {
  switch (t) {
    case Toggle::original: return "original";
    case Toggle::adjusted: return "adjusted";
    case Toggle::capped: return "capped";
  }
  return "?";
}

Toggle toggle_from_string(const std::string& s) {
  if (s == "original") return Toggle::original;
  if (s == "adjusted" || s == "adjusted-interval") return Toggle::adjusted;
  if (s == "capped" || s == "capped-bids") return Toggle::capped;
  throw ValidationError("unknown toggle '" + s + "'");
}

std::vector<Toggle> parse_toggles(const std::string& list) {
  std::vector<Toggle> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item == "both" || item == "all") {
      for (Toggle t : {Toggle::original, Toggle::adjusted, Toggle::capped})
        if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
      continue;
    }
    const Toggle t = toggle_from_string(item);
    if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
  }
  if (out.empty()) throw ValidationError("no toggles given");
  std::sort(out.begin(), out.end());
  return out;
}

ClearingResult clear_rt_market(const PowerSystem& sys, const Eigen::VectorXd& d,
                               const std::vector<BidCurve>& bids, const ClearingState& state,
                               const ClearingOptions& opt) {
  const int ng = static_cast<int>(sys.generators.size());
  const int nn = sys.network.node_count;
  const int ns = static_cast<int>(sys.storages.size());
  const int nl = sys.network.line_count();
  if (d.size() != nn) throw ValidationError("clear_rt_market: netload length differs from nodes");
  if (static_cast<int>(bids.size()) != ns) throw ValidationError("clear_rt_market: one bid curve per storage");
  if (state.e.size() != ns) throw ValidationError("clear_rt_market: SoC vector length differs");
  for (const auto& bc : bids) {
    for (std::size_t k = 1; k < bc.discharge.size(); ++k)
      if (bc.discharge[k].price < bc.discharge[k - 1].price - 1e-9)
        throw ValidationError("discharge offers must be non-decreasing");
    for (std::size_t k = 1; k < bc.charge.size(); ++k)
      if (bc.charge[k].price > bc.charge[k - 1].price + 1e-9)
        throw ValidationError("charge bids must be non-increasing");
  }
  const bool reserve = sys.config.reserve_ratio > 0.0;

  // Layout.
  int n = 0;
  const int g0 = n;
  n += ng;
  const int r0 = n;
  if (reserve) n += ng;
  const int inj0 = n;
  n += nn;
  const int shed0 = n;
  n += nn;
  const int spill = n++;
  std::vector<int> dis0(ns), chg0(ns);
  for (int s = 0; s < ns; ++s) {
    dis0[s] = n;
    n += static_cast<int>(bids[s].discharge.size());
    chg0[s] = n;
    n += static_cast<int>(bids[s].charge.size());
  }

  QpProblem qp;
  qp.c = Eigen::VectorXd::Zero(n);
  qp.lb = Eigen::VectorXd::Constant(n, -kInf);
  qp.ub = Eigen::VectorXd::Constant(n, kInf);
  std::vector<Eigen::Triplet<double>> qt, at, gt;
  std::vector<double> b, h;

  for (int i = 0; i < ng; ++i) {
    const Generator& g = sys.generators[i];
    if (g.cost_quad != 0.0) qt.emplace_back(g0 + i, g0 + i, 2.0 * g.cost_quad);
    qp.c(g0 + i) = g.cost_lin;
    double lo = g.g_min, hi = g.g_max;
    if (state.g_prev) {
      const double gp = (*state.g_prev)(i);
      lo = std::max(lo, gp - g.ramp_down);
      hi = std::min(hi, gp + g.ramp_up);
    }
    qp.lb(g0 + i) = lo;
    qp.ub(g0 + i) = hi;
    if (reserve) {
      qp.lb(r0 + i) = 0.0;
      gt.emplace_back(static_cast<int>(h.size()), g0 + i, 1.0);
      gt.emplace_back(static_cast<int>(h.size()), r0 + i, 1.0);
      h.push_back(g.g_max);
    }
  }
  for (int nd = 0; nd < nn; ++nd) {
    qp.lb(shed0 + nd) = 0.0;
    qp.c(shed0 + nd) = opt.voll;
  }
  qp.lb(spill) = 0.0;
  qp.c(spill) = opt.spill_penalty;
  for (int s = 0; s < ns; ++s) {
    for (std::size_t k = 0; k < bids[s].discharge.size(); ++k) {
      const int j = dis0[s] + static_cast<int>(k);
      qp.lb(j) = 0.0;
      qp.ub(j) = bids[s].discharge[k].quantity;
      qp.c(j) = bids[s].discharge[k].price + opt.tie_break;
    }
    for (std::size_t k = 0; k < bids[s].charge.size(); ++k) {
      const int j = chg0[s] + static_cast<int>(k);
      qp.lb(j) = 0.0;
      qp.ub(j) = bids[s].charge[k].quantity;
      qp.c(j) = -bids[s].charge[k].price + opt.tie_break;
    }
  }

  // Nodal injections.
  for (int nd = 0; nd < nn; ++nd) {
    at.emplace_back(nd, inj0 + nd, 1.0);
    at.emplace_back(nd, shed0 + nd, -1.0);
    b.push_back(0.0);
  }
  for (int i = 0; i < ng; ++i) at.emplace_back(sys.generators[i].node, g0 + i, -1.0);
  for (int s = 0; s < ns; ++s) {
    const int row = sys.storages[s].node;
    for (std::size_t k = 0; k < bids[s].discharge.size(); ++k) at.emplace_back(row, dis0[s] + k, -1.0);
    for (std::size_t k = 0; k < bids[s].charge.size(); ++k) at.emplace_back(row, chg0[s] + k, 1.0);
  }
  const int sys_row = nn;
  for (int nd = 0; nd < nn; ++nd) at.emplace_back(sys_row, inj0 + nd, 1.0);
  at.emplace_back(sys_row, spill, -1.0);
  b.push_back(d.sum());

  for (int l = 0; l < nl; ++l) {
    const auto pi = sys.network.ptdf.row(l);
    const double base = pi.dot(d);
    const double lim = sys.network.lines[l].flow_limit;
    const int hi = static_cast<int>(h.size());
    h.push_back(lim + base);
    h.push_back(lim - base);
    for (int nd = 0; nd < nn; ++nd)
      if (pi(nd) != 0.0) {
        gt.emplace_back(hi, inj0 + nd, pi(nd));
        gt.emplace_back(hi + 1, inj0 + nd, -pi(nd));
      }
  }
  int reserve_row = -1;
  if (reserve) {
    reserve_row = static_cast<int>(h.size());
    for (int i = 0; i < ng; ++i) gt.emplace_back(reserve_row, r0 + i, -1.0);
    h.push_back(-sys.config.reserve_ratio * d.sum());
  }

  qp.Q.resize(n, n);
  qp.Q.setFromTriplets(qt.begin(), qt.end());
  qp.A.resize(static_cast<int>(b.size()), n);
  qp.A.setFromTriplets(at.begin(), at.end());
  qp.b = Eigen::Map<Eigen::VectorXd>(b.data(), static_cast<int>(b.size()));
  qp.G.resize(static_cast<int>(h.size()), n);
  qp.G.setFromTriplets(gt.begin(), gt.end());
  qp.h = Eigen::Map<Eigen::VectorXd>(h.data(), static_cast<int>(h.size()));

  QpSettings settings;
  settings.tol = 1e-13;
  settings.max_iter = 120;
  const QpResult r = default_qp_backend()->solve(qp, settings);
  if (!r.ok())
    throw InfeasibleError("market clearing failed (" + to_string(r.status) + ")", "solver");

  ClearingResult out;
  out.g = r.x.segment(g0, ng);
  out.r = reserve ? Eigen::VectorXd(r.x.segment(r0, ng)) : Eigen::VectorXd::Zero(ng);
  out.inj = r.x.segment(inj0, nn);
  out.shed = r.x.segment(shed0, nn).cwiseMax(0.0);
  out.spill = std::max(0.0, r.x(spill));
  out.lmp = r.y.head(nn);
  out.lambda = -r.y(sys_row);
  out.p = Eigen::VectorXd::Zero(ns);
  out.b = Eigen::VectorXd::Zero(ns);
  out.e_next = Eigen::VectorXd::Zero(ns);
  for (int s = 0; s < ns; ++s) {
    const Storage& st = sys.storages[s];
    for (std::size_t k = 0; k < bids[s].discharge.size(); ++k) out.p(s) += std::max(0.0, r.x(dis0[s] + k));
    for (std::size_t k = 0; k < bids[s].charge.size(); ++k) out.b(s) += std::max(0.0, r.x(chg0[s] + k));
    out.e_next(s) = std::clamp(state.e(s) - out.p(s) / st.efficiency + out.b(s) * st.efficiency,
                               st.e_min, st.e_max);
    out.storage_cost += st.marginal_cost * out.p(s);
  }
  for (int i = 0; i < ng; ++i) out.generation_cost += sys.generators[i].cost(out.g(i));
  out.congestion_rent = out.lmp.dot(d - out.inj);
  out.shed_flag = out.shed.sum() > 1e-6;
  return out;
}

namespace {

struct CellContext {
  const PowerSystem& sys;
  const NetloadModel& netload;
  const PriceModelConfig& price;
  const ExperimentPlan& plan;
};

struct VariantOutcome {
  double cost = 0.0;
  std::vector<double> profit;
  double response = 0.0;
  double response_peak = 0.0;
  double shed = 0.0;
  int adjust_flags = 0;
};

std::vector<RunMetrics> run_cell(const CellContext& ctx, int da, int rt) {
  const PowerSystem& sys = ctx.sys;
  const ExperimentPlan& plan = ctx.plan;
  const int T = sys.config.horizon;
  const int nn = sys.network.node_count;
  const int ns = static_cast<int>(sys.storages.size());

  NetloadModel da_nl = ctx.netload;
  da_nl.mu += plan.da_forecast_noise *
              ctx.netload.sigma.cwiseProduct(
                  standard_normal(nn, T, stream_seed(plan.seed, kDaForecast, da)));
  const Eigen::MatrixXd realized =
      da_nl.mu + da_nl.sigma.cwiseProduct(standard_normal(
                     nn, T, stream_seed(plan.seed, kRtRealization, std::uint64_t(da) * 1000003ULL + rt)));
  const DecayFn decay = linear_decay(plan.decay_lookahead);

  std::vector<RunMetrics> rows;
  for (std::size_t ei = 0; ei < plan.epsilons.size(); ++ei) {
    const double eps = plan.epsilons[ei];
    const RollingResult rb = rolling_bounds(sys, da_nl, eps, realized, decay);
    const double hindsight_cost = rb.hindsight_solution.objective;

    // Periods with top-quartile day-ahead balance price.
    std::vector<int> order(T);
    for (int t = 0; t < T; ++t) order[t] = t;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return rb.da_solution.duals.lambda(a) > rb.da_solution.duals.lambda(b);
    });
    std::vector<bool> peak(T, false);
    for (int q = 0; q < (T + 3) / 4; ++q) peak[order[q]] = true;

    double coverage = 0.0, mean_bound = 0.0;
    for (int s = 0; s < ns; ++s) {
      coverage += rb.hindsight.ceiling(s) <= rb.da.ceiling(s) + 1e-6 ? 1.0 : 0.0;
      mean_bound += rb.da.ceiling(s);
    }
    coverage /= std::max(1, ns);
    mean_bound /= std::max(1, ns);

    // Base price models fitted at the baseline sigma around each storage's DAP.
    std::vector<Eigen::VectorXd> dap(ns);
    std::vector<MarkovPriceModel> base(ns);
    const Eigen::VectorXd sigma_base = Eigen::VectorXd::Constant(T, ctx.price.baseline_sigma);
    for (int s = 0; s < ns; ++s) {
      dap[s] = rb.da.lmp.row(s).transpose();
      if (ctx.price.baseline_sigma > 0.0) {
        const auto set = generate_rtp_scenarios(
            dap[s], sigma_base, ctx.price.scenarios,
            stream_seed(plan.seed, kPriceScenarios, (std::uint64_t(da) * 1000 + ei) * 1000 + s),
            ctx.price.ar1);
        base[s] = fit_markov(set, ctx.price.n_bins);
      } else {
        base[s] = MarkovPriceModel::deterministic(dap[s]);
      }
    }

    for (double scale : plan.sigma_scales) {
      std::vector<ValueFunction> vf_orig(ns);
      std::vector<MarkovPriceModel> at_scale(ns);
      TrainOptions topt;
      topt.soc_points = ctx.price.soc_points;
      for (int s = 0; s < ns; ++s) {
        at_scale[s] = base[s].scaled(dap[s], scale);
        vf_orig[s] = train_value_function(at_scale[s], sys.storages[s], topt);
      }
      // Adjusted value functions per rolling step, shared by all withholding levels.
      std::vector<std::vector<ValueFunction>> vf_adj;
      int adjust_flags = 0;
      const bool need_adj =
          std::find(plan.toggles.begin(), plan.toggles.end(), Toggle::adjusted) != plan.toggles.end();
      if (need_adj) {
        vf_adj.assign(T, std::vector<ValueFunction>(ns));
        const Eigen::VectorXd sigma_da = sigma_base * scale;
        for (int k = 0; k < T; ++k)
          for (int s = 0; s < ns; ++s) {
            AdjustConfig acfg;
            acfg.delta = plan.delta;
            acfg.t_from = k;
            acfg.soc_points = ctx.price.soc_points;
            const Eigen::VectorXd bound = Eigen::VectorXd::Constant(T, rb.rt[k].ceiling(s));
            AdjustResult ar =
                identify_interval(bound, sigma_da, dap[s], sys.storages[s], at_scale[s], acfg);
            adjust_flags += ar.flagged ? 1 : 0;
            vf_adj[k][s] = std::move(ar.value_function);
          }
      }

      for (double wf : plan.withholding) {
        for (Toggle tg : plan.toggles) {
          VariantOutcome vo;
          vo.profit.assign(ns, 0.0);
          vo.adjust_flags = tg == Toggle::adjusted ? adjust_flags : 0;
          ClearingState st;
          st.e.resize(ns);
          for (int s = 0; s < ns; ++s) st.e(s) = sys.storages[s].e_init;
          std::vector<int> prev_state(ns, -1);
          ClearingOptions copt;
          copt.voll = plan.voll;
          for (int t = 0; t < T; ++t) {
            std::vector<BidCurve> bids(ns);
            for (int s = 0; s < ns; ++s) {
              const ValueFunction& vf = tg == Toggle::adjusted ? vf_adj[t][s] : vf_orig[s];
              const Eigen::VectorXd curve = vf.expected_curve(t, prev_state[s]);
              BidCurve bc = make_bids(vf.grid, curve, st.e(s), sys.storages[s], ctx.price.n_segments);
              for (auto& seg : bc.discharge) seg.price *= wf;
              if (tg == Toggle::capped) bc = cap_bids(bc, rb.rt[t].ceiling(s), sys.storages[s]);
              bids[s] = std::move(bc);
            }
            const ClearingResult cr = clear_rt_market(sys, realized.col(t), bids, st, copt);
            vo.cost += cr.generation_cost + cr.storage_cost + plan.voll * cr.shed.sum();
            vo.shed += cr.shed.sum();
            for (int s = 0; s < ns; ++s) {
              const Storage& sto = sys.storages[s];
              const double price = cr.lmp(sto.node);
              vo.profit[s] += price * (cr.p(s) - cr.b(s)) - sto.marginal_cost * cr.p(s);
              vo.response += cr.p(s) + cr.b(s);
              if (peak[t]) vo.response_peak += cr.p(s) + cr.b(s);
              prev_state[s] = (tg == Toggle::adjusted ? vf_adj[t][s] : vf_orig[s]).state_of(t, price);
            }
            st.e = cr.e_next;
            st.g_prev = cr.g;
          }
          RunMetrics m;
          m.da_id = da;
          m.rt_id = rt;
          m.toggle = tg;
          m.sigma_scale = scale;
          m.eps = eps;
          m.withholding = wf;
          m.system_cost = round6(vo.cost);
          m.profit.resize(ns);
          double ptot = 0.0;
          for (int s = 0; s < ns; ++s) {
            m.profit[s] = round6(vo.profit[s]);
            ptot += vo.profit[s];
          }
          m.profit_total = round6(ptot);
          m.hindsight_cost = round6(hindsight_cost);
          m.gap = round6((vo.cost - hindsight_cost) / hindsight_cost);
          m.response_mwh = round6(vo.response);
          m.response_peak_mwh = round6(vo.response_peak);
          m.coverage = round6(coverage);
          m.mean_bound = round6(mean_bound);
          m.shed_mwh = round6(vo.shed);
          m.adjust_flags = vo.adjust_flags;
          m.flagged = vo.shed > 1e-6;
          rows.push_back(std::move(m));
        }
      }
    }
  }
  return rows;
}

auto canonical_key(const RunMetrics& m) {
  return std::make_tuple(m.da_id, m.rt_id, m.eps, m.sigma_scale, m.withholding,
                         static_cast<int>(m.toggle));
}

}  // namespace

void sort_canonical(std::vector<RunMetrics>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const RunMetrics& a, const RunMetrics& b) {
    return canonical_key(a) < canonical_key(b);
  });
}

ExperimentResult run_experiment(const PowerSystem& system, const NetloadModel& netload,
                                const PriceModelConfig& price, const ExperimentPlan& plan,
                                const std::set<std::pair<int, int>>& skip,
                                const CellCallback& on_cell) {
  if (plan.da_scenarios < 1 || plan.rt_per_da < 1) throw ValidationError("plan counts must be >= 1");
  if (plan.toggles.empty()) throw ValidationError("plan needs at least one toggle");
  const ValidationReport rep = validate_system(system, netload);
  if (!rep.ok()) throw ValidationError("system failed validation: " + rep.to_string());

  std::vector<std::pair<int, int>> cells;
  for (int da = 0; da < plan.da_scenarios; ++da)
    for (int rt = 0; rt < plan.rt_per_da; ++rt)
      if (!skip.count({da, rt})) cells.emplace_back(da, rt);

  ExperimentResult result;
  result.cells_total = plan.da_scenarios * plan.rt_per_da;
  result.cells_done = result.cells_total - static_cast<int>(cells.size());
  const CellContext ctx{system, netload, price, plan};
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t idx = next.fetch_add(1);
      if (idx >= cells.size()) return;
      const auto [da, rt] = cells[idx];
      std::vector<RunMetrics> rows;
      std::optional<CellFailure> failure;
      try {
        rows = run_cell(ctx, da, rt);
      } catch (const std::exception& e) {
        failure = CellFailure{da, rt, e.what()};
      }
      std::lock_guard<std::mutex> lock(mu);
      if (failure) {
        result.failures.push_back(*failure);
      } else {
        ++result.cells_done;
        result.rows.insert(result.rows.end(), rows.begin(), rows.end());
      }
      if (on_cell) on_cell(da, rt, rows, failure);
    }
  };
  const int workers = std::max(1, std::min<int>(plan.workers, static_cast<int>(cells.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  sort_canonical(result.rows);
  std::sort(result.failures.begin(), result.failures.end(), [](const auto& a, const auto& b) {
    return std::tie(a.da_id, a.rt_id) < std::tie(b.da_id, b.rt_id);
  });
  return result;
}

Summary summarize(const std::vector<RunMetrics>& rows, const std::string& label) {
  Summary out;
  if (rows.empty()) throw ValidationError("summarize: empty metrics table");
  using Key = std::tuple<double, double, double>;
  using Cell = std::tuple<int, int>;
  std::map<Key, std::map<Cell, std::map<int, const RunMetrics*>>> groups;
  for (const auto& m : rows)
    groups[{m.sigma_scale, m.eps, m.withholding}][{m.da_id, m.rt_id}][static_cast<int>(m.toggle)] = &m;

  for (const auto& [key, cells] : groups) {
    for (Toggle tg : {Toggle::original, Toggle::adjusted, Toggle::capped}) {
      SummaryRow row;
      row.label = label;
      std::tie(row.sigma_scale, row.eps, row.withholding) = key;
      row.toggle = tg;
      double red_sum = 0.0, red_max = -kInf;
      double profit_x = 0.0, profit_o = 0.0, resp_x = 0.0, resp_o = 0.0;
      double gap_x = 0.0, gap_o = 0.0;
      int paired = 0;
      for (const auto& [cell, by_toggle] : cells) {
        auto it = by_toggle.find(static_cast<int>(tg));
        if (it == by_toggle.end() || it->second->flagged) continue;
        const RunMetrics& x = *it->second;
        ++row.n;
        row.mean_cost += x.system_cost;
        row.mean_profit += x.profit_total;
        row.coverage += x.coverage;
        row.mean_bound += x.mean_bound;
        row.response_peak_mwh += x.response_peak_mwh;
        gap_x += x.gap;
        auto io = by_toggle.find(static_cast<int>(Toggle::original));
        if (io != by_toggle.end() && !io->second->flagged) {
          const RunMetrics& o = *io->second;
          const double red = 100.0 * (o.system_cost - x.system_cost) / o.system_cost;
          red_sum += red;
          red_max = std::max(red_max, red);
          profit_x += x.profit_total;
          profit_o += o.profit_total;
          resp_x += x.response_peak_mwh;
          resp_o += o.response_peak_mwh;
          gap_o += o.gap;
          ++paired;
        }
      }
      if (row.n == 0) {
        if (!cells.empty()) {
          std::ostringstream note;
          note << "group sigma_scale=" << std::get<0>(key) << " eps=" << std::get<1>(key)
               << " withholding=" << std::get<2>(key) << " toggle=" << to_string(tg)
               << " has no usable rows; omitted";
          bool present = false;
          for (const auto& [cell, by_toggle] : cells) present |= by_toggle.count(static_cast<int>(tg)) > 0;
          if (present) out.notes.push_back(note.str());
        }
        continue;
      }
      row.mean_cost /= row.n;
      row.mean_profit /= row.n;
      row.coverage /= row.n;
      row.mean_bound /= row.n;
      row.response_peak_mwh /= row.n;
      row.gap_pct = 100.0 * gap_x / row.n;
      if (paired > 0) {
        row.cost_reduction_mean_pct = red_sum / paired;
        row.cost_reduction_max_pct = red_max;
        row.profit_increase_pct =
            std::abs(profit_o) > 0 ? 100.0 * (profit_x - profit_o) / std::abs(profit_o) : 0.0;
        row.response_increase_pct = resp_o > 0 ? 100.0 * (resp_x - resp_o) / resp_o : 0.0;
        row.gap_original_pct = 100.0 * gap_o / paired;
      }
      out.rows.push_back(row);
    }
  }
  return out;
}

void write_results_csv(const std::string& path, const PowerSystem& system,
                       const std::vector<RunMetrics>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  csv::Writer w(out);
  std::vector<std::string> header{"da_id", "rt_id", "toggle", "sigma_scale", "eps", "withholding",
                                  "system_cost"};
  for (const auto& s : system.storages) header.push_back("profit_" + s.id);
  for (const char* h : {"profit_total", "hindsight_cost", "gap", "response_mwh",
                        "response_peak_mwh", "coverage", "mean_bound", "shed_mwh", "adjust_flags",
                        "flagged"})
    header.push_back(h);
  w.header(header);
  for (const auto& m : rows) {
    w.field(m.da_id).field(m.rt_id).field(to_string(m.toggle)).field(m.sigma_scale).field(m.eps);
    w.field(m.withholding).field(m.system_cost);
    for (double p : m.profit) w.field(p);
    w.field(m.profit_total).field(m.hindsight_cost).field(m.gap).field(m.response_mwh);
    w.field(m.response_peak_mwh).field(m.coverage).field(m.mean_bound).field(m.shed_mwh);
    w.field(m.adjust_flags).field(m.flagged);
    w.end_row();
  }
}

std::vector<RunMetrics> read_results_csv(const std::string& path, int storage_count) {
  const csv::Table t = csv::read_table(path);
  const std::size_t expected = 7 + storage_count + 10;
  std::vector<RunMetrics> rows;
  for (const auto& rec : t.rows) {
    if (rec.size() != expected) throw IoError(path + ": unexpected field count");
    RunMetrics m;
    std::size_t i = 0;
    m.da_id = std::stoi(rec[i++]);
    m.rt_id = std::stoi(rec[i++]);
    m.toggle = toggle_from_string(rec[i++]);
    m.sigma_scale = std::stod(rec[i++]);
    m.eps = std::stod(rec[i++]);
    m.withholding = std::stod(rec[i++]);
    m.system_cost = std::stod(rec[i++]);
    for (int s = 0; s < storage_count; ++s) m.profit.push_back(std::stod(rec[i++]));
    m.profit_total = std::stod(rec[i++]);
    m.hindsight_cost = std::stod(rec[i++]);
    m.gap = std::stod(rec[i++]);
    m.response_mwh = std::stod(rec[i++]);
    m.response_peak_mwh = std::stod(rec[i++]);
    m.coverage = std::stod(rec[i++]);
    m.mean_bound = std::stod(rec[i++]);
    m.shed_mwh = std::stod(rec[i++]);
    m.adjust_flags = std::stoi(rec[i++]);
    m.flagged = rec[i++] == "true";
    rows.push_back(std::move(m));
  }
  return rows;
}

void write_summary_csv(const std::string& path, const Summary& summary) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  csv::Writer w(out);
  w.header({"label", "sigma_scale", "eps", "withholding", "toggle", "n", "mean_cost",
            "mean_profit", "cost_reduction_mean_pct", "cost_reduction_max_pct",
            "profit_increase_pct", "gap_pct", "gap_original_pct", "response_peak_mwh",
            "response_increase_pct", "coverage", "mean_bound"});
  for (const auto& r : summary.rows) {
    w.field(r.label).field(r.sigma_scale).field(r.eps).field(r.withholding).field(to_string(r.toggle));
    w.field(r.n).field(r.mean_cost).field(r.mean_profit).field(r.cost_reduction_mean_pct);
    w.field(r.cost_reduction_max_pct).field(r.profit_increase_pct).field(r.gap_pct);
    w.field(r.gap_original_pct).field(r.response_peak_mwh).field(r.response_increase_pct);
    w.field(r.coverage).field(r.mean_bound);
    w.end_row();
  }
}

double sign_test_p(int wins, int losses) {
  const int n = wins + losses;
  if (n == 0) return 1.0;
  double p = 0.0;
  for (int k = wins; k <= n; ++k)
    p += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) -
                  n * std::log(2.0));
  return std::min(1.0, p);
}

}  // namespace esb
