#include "esbound/ced.hpp"

#include "esbound/csv.hpp"
#include "esbound/price_process.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

namespace esb {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct BuildFlags {
  bool flows = true;
  bool ramps = true;
};

class RowBuilder {
 public:
  int add(double rhs) {
    rhs_.push_back(rhs);
    return static_cast<int>(rhs_.size()) - 1;
  }
  void coef(int row, int col, double v) { trip_.emplace_back(row, col, v); }
  void finish(int n, SpMat& M, Eigen::VectorXd& rhs) {
    M.resize(static_cast<int>(rhs_.size()), n);
    M.setFromTriplets(trip_.begin(), trip_.end());
    M.makeCompressed();
    rhs = Eigen::Map<Eigen::VectorXd>(rhs_.data(), static_cast<int>(rhs_.size()));
  }

 private:
  std::vector<double> rhs_;
  std::vector<Eigen::Triplet<double>> trip_;
};

DispatchProblem build_impl(const PowerSystem& sys, const NetloadModel& netload,
                           const DispatchOptions& opt, const BuildFlags& flags) {
  const int T = sys.config.horizon;
  if (!(opt.epsilon > 0.0 && opt.epsilon <= 0.5))
    throw ValidationError("epsilon must lie in (0, 0.5]");
  if (opt.window_start < 0 || opt.window_start >= T) throw ValidationError("window out of horizon");
  if (netload.periods() != T || netload.nodes() != sys.network.node_count)
    throw ValidationError("netload shape does not match the system");

  DispatchProblem P;
  P.system = &sys;
  P.options = opt;
  P.k = opt.window_start;
  P.T = T;
  P.ng = static_cast<int>(sys.generators.size());
  P.nn = sys.network.node_count;
  P.ns = static_cast<int>(sys.storages.size());
  P.nl = sys.network.line_count();
  P.has_reserve = sys.config.reserve_ratio > 0.0;
  P.block = P.ng * (P.has_reserve ? 2 : 1) + P.nn + 3 * P.ns;
  P.z = opt.hindsight ? 0.0 : normal_quantile(1.0 - opt.epsilon);
  const int W = P.W();
  P.mu = netload.mu.middleCols(P.k, W);
  P.sigma = netload.sigma.middleCols(P.k, W);
  if (opt.hindsight) P.sigma.setZero();

  NetloadModel window{P.mu, P.sigma, netload.correlation};
  P.balance_rhs.resize(W);
  P.flow_margin.resize(P.nl, W);
  for (int w = 0; w < W; ++w) {
    P.balance_rhs(w) = window.total_mean(w) + P.z * window.total_sigma(w);
    for (int l = 0; l < P.nl; ++l)
      P.flow_margin(l, w) =
          P.z == 0.0 ? 0.0 : P.z * window.weighted_sigma(sys.network.ptdf.row(l).transpose(), w);
  }

  P.e_prev.resize(P.ns);
  for (int s = 0; s < P.ns; ++s) P.e_prev(s) = sys.storages[s].e_init;
  if (opt.history) {
    if (opt.history->e.size() != P.ns) throw ValidationError("history SoC has wrong length");
    P.e_prev = opt.history->e;
    if (opt.history->g.size() == P.ng) P.g_prev = opt.history->g;
  }

  // Build-time capability check against the quantile netload.
  double gmax = 0.0, pmax = 0.0;
  for (const auto& g : sys.generators) gmax += g.g_max;
  for (const auto& s : sys.storages) pmax += s.p_max;
  for (int w = 0; w < W; ++w) {
    const double need = (1.0 + sys.config.reserve_ratio) * P.balance_rhs(w) - pmax;
    if (need > gmax)
      throw InfeasibleError("quantile netload " + std::to_string(P.balance_rhs(w)) + " at t=" +
                                std::to_string(P.k + w) + " exceeds total capability",
                            "balance", P.k);
  }

  const int n = W * P.block;
  auto& qp = P.qp;
  qp.c = Eigen::VectorXd::Zero(n);
  qp.lb = Eigen::VectorXd::Constant(n, -kInf);
  qp.ub = Eigen::VectorXd::Constant(n, kInf);
  std::vector<Eigen::Triplet<double>> qtrip;

  RowBuilder eq, in;
  P.node_row.assign(W, std::vector<int>(P.nn, -1));
  P.soc_row.assign(W, std::vector<int>(P.ns, -1));
  P.balance_row.assign(W, -1);
  P.reserve_row.assign(W, -1);
  P.flow_hi_row.assign(W, std::vector<int>(P.nl, -1));
  P.flow_lo_row.assign(W, std::vector<int>(P.nl, -1));
  P.cap_row.assign(W, std::vector<int>(P.ng, -1));
  P.ramp_up_row.assign(W, std::vector<int>(P.ng, -1));
  P.ramp_dn_row.assign(W, std::vector<int>(P.ng, -1));

  for (int w = 0; w < W; ++w) {
    for (int i = 0; i < P.ng; ++i) {
      const Generator& g = sys.generators[i];
      const int gi = P.g_idx(w, i);
      if (g.cost_quad != 0.0) qtrip.emplace_back(gi, gi, 2.0 * g.cost_quad);
      qp.c(gi) = g.cost_lin;
      qp.lb(gi) = g.g_min;
      qp.ub(gi) = P.has_reserve ? kInf : g.g_max;
      if (P.has_reserve) {
        qp.lb(P.r_idx(w, i)) = 0.0;
        const int row = in.add(g.g_max);
        in.coef(row, gi, 1.0);
        in.coef(row, P.r_idx(w, i), 1.0);
        P.cap_row[w][i] = row;
      }
    }
    for (int s = 0; s < P.ns; ++s) {
      const Storage& st = sys.storages[s];
      qp.c(P.p_idx(w, s)) = st.marginal_cost;
      qp.lb(P.p_idx(w, s)) = 0.0;
      qp.ub(P.p_idx(w, s)) = st.p_max;
      qp.lb(P.b_idx(w, s)) = 0.0;
      qp.ub(P.b_idx(w, s)) = st.p_max;
      qp.lb(P.e_idx(w, s)) = st.e_min;
      qp.ub(P.e_idx(w, s)) = st.e_max;
    }

    // Nodal injection definitions.
    for (int nd = 0; nd < P.nn; ++nd) {
      const int row = eq.add(0.0);
      eq.coef(row, P.inj_idx(w, nd), 1.0);
      P.node_row[w][nd] = row;
    }
    for (int i = 0; i < P.ng; ++i) eq.coef(P.node_row[w][sys.generators[i].node], P.g_idx(w, i), -1.0);
    for (int s = 0; s < P.ns; ++s) {
      const int row = P.node_row[w][sys.storages[s].node];
      eq.coef(row, P.p_idx(w, s), -1.0);
      eq.coef(row, P.b_idx(w, s), 1.0);
    }

    // SoC dynamics: e_t - e_{t-1} + p/eta - b*eta = 0. Its multiplier is the value of
    // stored energy, the negative of the convention that writes the dynamics the other way.
    for (int s = 0; s < P.ns; ++s) {
      const Storage& st = sys.storages[s];
      const int row = eq.add(w == 0 ? P.e_prev(s) : 0.0);
      eq.coef(row, P.e_idx(w, s), 1.0);
      if (w > 0) eq.coef(row, P.e_idx(w - 1, s), -1.0);
      eq.coef(row, P.p_idx(w, s), 1.0 / st.efficiency);
      eq.coef(row, P.b_idx(w, s), -st.efficiency);
      P.soc_row[w][s] = row;
    }

    // Chance-constrained balance.
    {
      const int row = in.add(-P.balance_rhs(w));
      for (int nd = 0; nd < P.nn; ++nd) in.coef(row, P.inj_idx(w, nd), -1.0);
      P.balance_row[w] = row;
    }
    if (P.has_reserve) {
      const int row = in.add(-sys.config.reserve_ratio * P.balance_rhs(w));
      for (int i = 0; i < P.ng; ++i) in.coef(row, P.r_idx(w, i), -1.0);
      P.reserve_row[w] = row;
    }
    if (flags.flows) {
      for (int l = 0; l < P.nl; ++l) {
        const auto pi = sys.network.ptdf.row(l);
        const double base = pi.dot(P.mu.col(w));
        const double lim = sys.network.lines[l].flow_limit;
        const int hi = in.add(lim + base - P.flow_margin(l, w));
        const int lo = in.add(lim - base - P.flow_margin(l, w));
        for (int nd = 0; nd < P.nn; ++nd)
          if (pi(nd) != 0.0) {
            in.coef(hi, P.inj_idx(w, nd), pi(nd));
            in.coef(lo, P.inj_idx(w, nd), -pi(nd));
          }
        P.flow_hi_row[w][l] = hi;
        P.flow_lo_row[w][l] = lo;
      }
    }
    if (flags.ramps) {
      for (int i = 0; i < P.ng; ++i) {
        const Generator& g = sys.generators[i];
        const double span = g.g_max - g.g_min;
        if (w > 0) {
          if (g.ramp_up < span) {
            const int row = in.add(g.ramp_up);
            in.coef(row, P.g_idx(w, i), 1.0);
            in.coef(row, P.g_idx(w - 1, i), -1.0);
            P.ramp_up_row[w][i] = row;
          }
          if (g.ramp_down < span) {
            const int row = in.add(g.ramp_down);
            in.coef(row, P.g_idx(w - 1, i), 1.0);
            in.coef(row, P.g_idx(w, i), -1.0);
            P.ramp_dn_row[w][i] = row;
          }
        } else if (P.g_prev) {
          const double gp = (*P.g_prev)(i);
          if (gp + g.ramp_up < g.g_max) {
            const int row = in.add(gp + g.ramp_up);
            in.coef(row, P.g_idx(0, i), 1.0);
            P.ramp_up_row[0][i] = row;
          }
          if (gp - g.ramp_down > g.g_min) {
            const int row = in.add(g.ramp_down - gp);
            in.coef(row, P.g_idx(0, i), -1.0);
            P.ramp_dn_row[0][i] = row;
          }
        }
      }
    }
  }
  qp.Q.resize(n, n);
  qp.Q.setFromTriplets(qtrip.begin(), qtrip.end());
  eq.finish(n, qp.A, qp.b);
  in.finish(n, qp.G, qp.h);
  return P;
}

DispatchSolution extract(const DispatchProblem& P, const QpResult& r) {
  const PowerSystem& sys = *P.system;
  const int W = P.W();
  DispatchSolution sol;
  sol.k = P.k;
  sol.T = P.T;
  sol.hindsight = P.options.hindsight;
  sol.status = r.status;
  sol.iterations = r.iterations;
  sol.primal_residual = r.primal_residual;
  sol.dual_residual = r.dual_residual;
  sol.complementarity = r.complementarity;

  auto& d = sol.duals;
  sol.g.setZero(P.ng, W);
  sol.r.setZero(P.ng, W);
  sol.inj.setZero(P.nn, W);
  sol.p.setZero(P.ns, W);
  sol.b.setZero(P.ns, W);
  sol.e.setZero(P.ns, W);
  d.lambda.setZero(W);
  d.reserve.setZero(W);
  d.omega_hi.setZero(P.nl, W);
  d.omega_lo.setZero(P.nl, W);
  d.nu_lo.setZero(P.ng, W);
  d.nu_hi.setZero(P.ng, W);
  d.kappa_up.setZero(P.ng, W);
  d.kappa_dn.setZero(P.ng, W);
  d.alpha_lo.setZero(P.ns, W);
  d.alpha_hi.setZero(P.ns, W);
  d.beta_lo.setZero(P.ns, W);
  d.beta_hi.setZero(P.ns, W);
  d.iota_lo.setZero(P.ns, W);
  d.iota_hi.setZero(P.ns, W);
  d.theta.setZero(P.ns, W);
  d.psi.setZero(P.nn, W);

  double obj = 0.0;
  for (int w = 0; w < W; ++w) {
    for (int i = 0; i < P.ng; ++i) {
      const int gi = P.g_idx(w, i);
      sol.g(i, w) = r.x(gi);
      obj += sys.generators[i].cost(r.x(gi));
      if (P.has_reserve) sol.r(i, w) = r.x(P.r_idx(w, i));
      d.nu_lo(i, w) = r.zl(gi);
      d.nu_hi(i, w) = P.has_reserve ? r.z(P.cap_row[w][i]) : r.zu(gi);
      if (P.ramp_up_row[w][i] >= 0) d.kappa_up(i, w) = r.z(P.ramp_up_row[w][i]);
      if (P.ramp_dn_row[w][i] >= 0) d.kappa_dn(i, w) = r.z(P.ramp_dn_row[w][i]);
    }
    for (int nd = 0; nd < P.nn; ++nd) {
      sol.inj(nd, w) = r.x(P.inj_idx(w, nd));
      d.psi(nd, w) = r.y(P.node_row[w][nd]);
    }
    for (int s = 0; s < P.ns; ++s) {
      const int pi = P.p_idx(w, s), bi = P.b_idx(w, s), ei = P.e_idx(w, s);
      sol.p(s, w) = r.x(pi);
      sol.b(s, w) = r.x(bi);
      sol.e(s, w) = r.x(ei);
      obj += sys.storages[s].marginal_cost * r.x(pi);
      d.alpha_lo(s, w) = r.zl(pi);
      d.alpha_hi(s, w) = r.zu(pi);
      d.beta_lo(s, w) = r.zl(bi);
      d.beta_hi(s, w) = r.zu(bi);
      d.iota_lo(s, w) = r.zl(ei);
      d.iota_hi(s, w) = r.zu(ei);
      d.theta(s, w) = r.y(P.soc_row[w][s]);
    }
    d.lambda(w) = r.z(P.balance_row[w]);
    if (P.reserve_row[w] >= 0) d.reserve(w) = r.z(P.reserve_row[w]);
    for (int l = 0; l < P.nl; ++l) {
      if (P.flow_hi_row[w][l] >= 0) d.omega_hi(l, w) = r.z(P.flow_hi_row[w][l]);
      if (P.flow_lo_row[w][l] >= 0) d.omega_lo(l, w) = r.z(P.flow_lo_row[w][l]);
    }
  }
  sol.objective = obj;
  sol.lmp.resize(P.nn, W);
  const Eigen::MatrixXd cong = sys.network.ptdf.transpose() * (d.omega_hi - d.omega_lo);
  for (int w = 0; w < W; ++w)
    for (int nd = 0; nd < P.nn; ++nd)
      sol.lmp(nd, w) = d.lambda(w) - (P.nl ? cong(nd, w) : 0.0);
  return sol;
}

// SoC multipliers are not unique once a storage sits on a bound or idles. Any value
// between the charge and discharge thresholds is optimal. Picks the least element, the
// value of one extra MWh held in storage.
void canonical_theta(const DispatchProblem& P, const QpProblem& qp, DispatchSolution& sol) {
  const int W = P.W();
  auto& d = sol.duals;
  for (int s = 0; s < P.ns; ++s) {
    const Storage& st = P.system->storages[s];
    const double eta = st.efficiency;
    const int node = st.node;
    Eigen::VectorXd lo = Eigen::VectorXd::Constant(W, -kInf);
    Eigen::VectorXd hi = Eigen::VectorXd::Constant(W, kInf);
    // link(w): 0 equal to the next period, 1 at least the next, -1 at most the next, 2 free.
    std::vector<int> link(W, 0);
    // Multipliers this large mark a bound as binding even if the primal point stops short of it.
    const double thr = 1e-5 * std::max(1.0, d.theta.row(s).cwiseAbs().maxCoeff());
    for (int w = 0; w < W; ++w) {
      const double psi = d.psi(node, w);
      // Discharge: theta = eta (psi - M) when interior, above it at zero, below it at capacity.
      {
        const int idx = P.p_idx(w, s);
        const double v = eta * (psi - st.marginal_cost);
        const double x = sol.p(s, w), scale = std::max(1.0, qp.ub(idx));
        const bool at_lo = x <= qp.lb(idx) + 1e-6 * scale || d.alpha_lo(s, w) > thr;
        const bool at_hi = x >= qp.ub(idx) - 1e-6 * scale || d.alpha_hi(s, w) > thr;
        if (!(at_lo && at_hi)) {
          if (!at_hi) lo(w) = std::max(lo(w), v);
          if (!at_lo) hi(w) = std::min(hi(w), v);
        }
      }
      // Charge: theta = psi / eta when interior, below it at zero, above it at capacity.
      {
        const int idx = P.b_idx(w, s);
        const double v = psi / eta;
        const double x = sol.b(s, w), scale = std::max(1.0, qp.ub(idx));
        const bool at_lo = x <= qp.lb(idx) + 1e-6 * scale || d.beta_lo(s, w) > thr;
        const bool at_hi = x >= qp.ub(idx) - 1e-6 * scale || d.beta_hi(s, w) > thr;
        if (!(at_lo && at_hi)) {
          if (!at_hi) hi(w) = std::min(hi(w), v);
          if (!at_lo) lo(w) = std::max(lo(w), v);
        }
      }
      {
        const int idx = P.e_idx(w, s);
        const double x = sol.e(s, w), scale = std::max(1.0, std::abs(qp.ub(idx)));
        const bool at_lo = x <= qp.lb(idx) + 1e-6 * scale || d.iota_lo(s, w) > thr;
        const bool at_hi = x >= qp.ub(idx) - 1e-6 * scale || d.iota_hi(s, w) > thr;
        link[w] = at_lo && at_hi ? 2 : at_lo ? 1 : at_hi ? -1 : 0;
      }
    }
    // Least solution of the bounds and the chain, with zero value after the window.
    Eigen::VectorXd th = lo;
    for (int pass = 0; pass < 2 * W + 2; ++pass) {
      bool changed = false;
      auto raise = [&](int w, double v) {
        if (v > th(w)) {
          th(w) = v;
          changed = true;
        }
      };
      for (int w = W - 1; w >= 0; --w) {
        const double next = w + 1 < W ? th(w + 1) : 0.0;
        if (link[w] == 0 || link[w] == 1) raise(w, next);
        if (w + 1 < W && (link[w] == 0 || link[w] == -1)) raise(w + 1, th(w));
      }
      if (!changed) break;
    }
    bool ok = th.allFinite();
    const double tol = 1e-6 * std::max(1.0, th.allFinite() ? th.cwiseAbs().maxCoeff() : 1.0);
    for (int w = 0; ok && w < W; ++w) {
      if (th(w) > hi(w) + tol) ok = false;
      const double next = w + 1 < W ? th(w + 1) : 0.0;
      if ((link[w] == 0 && std::abs(th(w) - next) > tol) || (link[w] == -1 && th(w) > next + tol))
        ok = false;
    }
    if (!ok) continue;
    d.theta.row(s) = th.transpose();
    for (int w = 0; w < W; ++w) {
      const double psi = d.psi(node, w);
      const double rp = st.marginal_cost - psi + th(w) / eta;
      const double rb = psi - eta * th(w);
      const double re = th(w) - (w + 1 < W ? th(w + 1) : 0.0);
      d.alpha_lo(s, w) = std::max(rp, 0.0);
      d.alpha_hi(s, w) = std::max(-rp, 0.0);
      d.beta_lo(s, w) = std::max(rb, 0.0);
      d.beta_hi(s, w) = std::max(-rb, 0.0);
      d.iota_lo(s, w) = std::max(re, 0.0);
      d.iota_hi(s, w) = std::max(-re, 0.0);
    }
  }
}

std::string diagnose(const PowerSystem& sys, const NetloadModel& netload, const DispatchOptions& opt,
                     const QpSolverBackend& backend) {
  const QpSettings st;
  try {
    const DispatchProblem no_flow = build_impl(sys, netload, opt, {false, true});
    if (backend.solve(no_flow.qp, st).ok()) return "flow";
    const DispatchProblem no_ramp = build_impl(sys, netload, opt, {false, false});
    if (backend.solve(no_ramp.qp, st).ok()) return "ramp";
  } catch (const InfeasibleError& e) {
    return e.cause;
  }
  return "balance";
}

NetloadModel problem_netload(const DispatchProblem& P) {
  NetloadModel nl;
  const int T = P.T;
  nl.mu = Eigen::MatrixXd::Zero(P.nn, T);
  nl.sigma = Eigen::MatrixXd::Zero(P.nn, T);
  nl.mu.middleCols(P.k, P.W()) = P.mu;
  nl.sigma.middleCols(P.k, P.W()) = P.sigma;
  return nl;
}

}  // namespace

bool DispatchSolution::clean() const {
  return status == QpStatus::optimal && primal_residual <= 1e-6 && dual_residual <= 1e-6 &&
         complementarity <= 1e-5;
}

DispatchHistory DispatchSolution::history_at(int t) const {
  const int w = t - k;
  if (w < 0 || w >= W()) throw ValidationError("history_at: period outside the solved window");
  return {g.col(w), e.col(w)};
}

DispatchProblem build_dispatch(const PowerSystem& system, const NetloadModel& netload,
                               const DispatchOptions& options) {
  return build_impl(system, netload, options, {});
}

DispatchSolution solve_dispatch(const DispatchProblem& problem,
                                std::shared_ptr<const QpSolverBackend> backend) {
  const auto start = std::chrono::steady_clock::now();
  QpSettings settings;
  settings.tol = 1e-13;
  settings.max_iter = 120;
  QpProblem qp = problem.qp;
  QpResult r = backend->solve(qp, settings);
  int rounds = 0;
  if (r.ok() && problem.options.mode == Complementarity::fix_and_resolve) {
    for (; rounds < 3; ++rounds) {
      bool changed = false;
      for (int w = 0; w < problem.W(); ++w)
        for (int s = 0; s < problem.ns; ++s) {
          const int pi = problem.p_idx(w, s), bi = problem.b_idx(w, s);
          if (r.x(pi) * r.x(bi) > 1e-4) {
            const int fix = r.x(pi) < r.x(bi) ? pi : bi;
            qp.lb(fix) = qp.ub(fix) = 0.0;
            changed = true;
          }
        }
      if (!changed) break;
      r = backend->solve(qp, settings);
      if (!r.ok()) break;
    }
  }
  if (!r.ok()) {
    const std::string cause =
        r.status == QpStatus::primal_infeasible
            ? diagnose(*problem.system, problem_netload(problem), problem.options, *backend)
            : "solver";
    throw InfeasibleError("dispatch at k=" + std::to_string(problem.k) + " failed (" +
                              to_string(r.status) + ", likely cause: " + cause + ")",
                          cause, problem.k);
  }
  DispatchSolution sol = extract(problem, r);
  canonical_theta(problem, qp, sol);
  sol.fix_rounds = rounds;
  sol.solve_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return sol;
}

double compute_lmp(const PowerSystem& system, const DispatchSolution& solution, int node, int t) {
  const int w = t - solution.k;
  if (w < 0 || w >= solution.W()) throw ValidationError("compute_lmp: period outside window");
  double lmp = solution.duals.lambda(w);
  for (int l = 0; l < system.network.line_count(); ++l)
    lmp -= system.network.ptdf(l, node) *
           (solution.duals.omega_hi(l, w) - solution.duals.omega_lo(l, w));
  return lmp;
}

std::string to_string(BoundTag tag) {
  switch (tag) {
    case BoundTag::da: return "DA";
    case BoundTag::rt: return "RT";
    case BoundTag::hindsight: return "hindsight";
  }
  return "?";
}

BoundSeries extract_bounds(const PowerSystem& system, const DispatchSolution& solution,
                           BoundTag tag) {
  if (!solution.clean())
    throw Error("refusing to derive bounds: residuals primal=" +
                std::to_string(solution.primal_residual) +
                " dual=" + std::to_string(solution.dual_residual) +
                " complementarity=" + std::to_string(solution.complementarity));
  BoundSeries bs;
  bs.tag = tag;
  bs.k = solution.k;
  bs.theta = solution.duals.theta;
  const int ns = static_cast<int>(system.storages.size());
  bs.ceiling.resize(ns);
  bs.lmp.resize(ns, solution.W());
  for (int s = 0; s < ns; ++s) {
    bs.ceiling(s) = bs.theta.row(s).maxCoeff();
    bs.lmp.row(s) = solution.lmp.row(system.storages[s].node);
  }
  bs.lambda = solution.duals.lambda;
  return bs;
}

std::vector<BoundCheck> bound_formula_check(const PowerSystem& system,
                                            const DispatchSolution& solution, double tol) {
  std::vector<BoundCheck> out;
  for (std::size_t s = 0; s < system.storages.size(); ++s) {
    const Storage& st = system.storages[s];
    const auto theta = solution.duals.theta.row(s);
    const auto lmp = solution.lmp.row(st.node);
    BoundCheck c;
    c.storage_id = st.id;
    int w_star = 0;
    c.max_theta = theta.maxCoeff(&w_star);
    c.max_lmp = lmp.maxCoeff();
    c.argmax_t = solution.k + w_star;
    c.bound = std::max(c.max_lmp / st.efficiency, (c.max_lmp - st.marginal_cost) * st.efficiency);
    c.ok = c.max_theta <= c.bound + tol * std::max(1.0, std::abs(c.bound));
    const double as_charge = std::abs(theta(w_star) - lmp(w_star) / st.efficiency);
    const double as_discharge =
        std::abs(theta(w_star) - (lmp(w_star) - st.marginal_cost) * st.efficiency);
    c.binding_branch = as_discharge <= as_charge ? "discharge" : "charge";
    out.push_back(c);
  }
  return out;
}

DecayFn linear_decay(int lookahead) {
  return [lookahead](int lead) {
    if (lead <= 0) return 0.0;
    return std::min(1.0, static_cast<double>(lead) / std::max(1, lookahead));
  };
}

NetloadModel rolling_forecast(const NetloadModel& netload, const Eigen::MatrixXd& realized, int k,
                              const DecayFn& decay) {
  NetloadModel f = netload;
  for (int t = 0; t < netload.periods(); ++t) {
    if (t <= k) {
      f.mu.col(t) = realized.col(t);
      f.sigma.col(t).setZero();
    } else {
      const double m = std::clamp(decay(t - k), 0.0, 1.0);
      f.mu.col(t) = realized.col(t) + m * (netload.mu.col(t) - realized.col(t));
      f.sigma.col(t) = m * netload.sigma.col(t);
    }
  }
  return f;
}

RollingResult rolling_bounds(const PowerSystem& system, const NetloadModel& netload,
                             double epsilon, const Eigen::MatrixXd& realized, const DecayFn& decay,
                             bool keep_solutions) {
  const int T = system.config.horizon;
  if (realized.rows() != netload.nodes() || realized.cols() != T)
    throw ValidationError("realized trace must be nodes x horizon");
  RollingResult out;
  DispatchOptions da_opt;
  da_opt.epsilon = epsilon;
  out.da_solution = run_dispatch(system, netload, da_opt);
  out.da = extract_bounds(system, out.da_solution, BoundTag::da);

  NetloadModel hind{realized, Eigen::MatrixXd::Zero(realized.rows(), T), netload.correlation};
  DispatchOptions h_opt = da_opt;
  h_opt.hindsight = true;
  out.hindsight_solution = run_dispatch(system, hind, h_opt);
  out.hindsight = extract_bounds(system, out.hindsight_solution, BoundTag::hindsight);

  out.hindsight_tail.push_back(out.hindsight);
  for (int k = 1; k < T; ++k) {
    DispatchOptions opt = h_opt;
    opt.window_start = k;
    opt.history = out.hindsight_solution.history_at(k - 1);
    out.hindsight_tail.push_back(extract_bounds(system, run_dispatch(system, hind, opt), BoundTag::hindsight));
  }

  std::optional<DispatchHistory> prev;
  for (int k = 0; k < T; ++k) {
    DispatchOptions opt = da_opt;
    opt.window_start = k;
    opt.history = prev;
    const NetloadModel f = rolling_forecast(netload, realized, k, decay);
    DispatchSolution sol;
    try {
      sol = run_dispatch(system, f, opt);
    } catch (const InfeasibleError& e) {
      throw InfeasibleError(std::string("rolling step k=") + std::to_string(k) + ": " + e.what(),
                            e.cause, k);
    }
    out.rt.push_back(extract_bounds(system, sol, BoundTag::rt));
    prev = sol.history_at(k);
    if (keep_solutions) out.rt_solutions.push_back(std::move(sol));
  }
  return out;
}

void write_bounds_csv(const std::string& path, const PowerSystem& system,
                      const std::vector<std::pair<int, BoundSeries>>& series) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  csv::Writer w(out);
  w.header({"scenario_id", "k", "s", "t", "theta", "B", "lmp_node", "lambda_eps"});
  for (const auto& [id, bs] : series)
    for (std::size_t s = 0; s < system.storages.size(); ++s)
      for (int c = 0; c < bs.theta.cols(); ++c) {
        w.field(id).field(bs.k).field(system.storages[s].id).field(bs.k + c);
        w.field(bs.theta(s, c)).field(bs.ceiling(s)).field(bs.lmp(s, c)).field(bs.lambda(c));
        w.end_row();
      }
}

void write_lmp_csv(const std::string& path, const DispatchSolution& solution) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  csv::Writer w(out);
  w.header({"t", "node", "lmp", "lambda_eps"});
  for (int c = 0; c < solution.W(); ++c)
    for (int nd = 0; nd < solution.lmp.rows(); ++nd) {
      w.field(solution.k + c).field(nd).field(solution.lmp(nd, c)).field(solution.duals.lambda(c));
      w.end_row();
    }
}

void write_problem_dump(const std::string& path, const DispatchProblem& problem) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  const QpProblem& qp = problem.qp;
  out << "# min 1/2 x'Qx + c'x  s.t.  Ax = b, Gx <= h, lb <= x <= ub\n";
  out << "n " << qp.n() << " meq " << qp.A.rows() << " mineq " << qp.G.rows() << "\n";
  auto dump_matrix = [&](const char* name, const SpMat& M) {
    out << "matrix " << name << " " << M.nonZeros() << "\n";
    for (int j = 0; j < M.outerSize(); ++j)
      for (SpMat::InnerIterator it(M, j); it; ++it)
        out << it.row() << " " << it.col() << " " << csv::fmt(it.value()) << "\n";
  };
  auto dump_vector = [&](const char* name, const Eigen::VectorXd& v) {
    out << "vector " << name << " " << v.size() << "\n";
    for (int i = 0; i < v.size(); ++i) out << csv::fmt(v(i)) << "\n";
  };
  dump_matrix("Q", qp.Q);
  dump_vector("c", qp.c);
  dump_matrix("A", qp.A);
  dump_vector("b", qp.b);
  dump_matrix("G", qp.G);
  dump_vector("h", qp.h);
  dump_vector("lb", qp.lb);
  dump_vector("ub", qp.ub);
}

}  // namespace esb
