#include "esbound/sdp.hpp"

#include "esbound/csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace esb {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

double edge_tol(const SocGrid& g) { return 1e-12 * std::max(1.0, std::abs(g.hi) + std::abs(g.lo)); }
}  // namespace

SocGrid::SocGrid(double lo_, double hi_, int n_) : lo(lo_), hi(hi_), n(n_) {
  if (n < 3) throw ValidationError("SoC grid needs at least 3 points");
  if (!(hi > lo)) throw ValidationError("SoC grid requires hi > lo");
}

Eigen::VectorXd SocGrid::points() const {
  Eigen::VectorXd p(n);
  for (int i = 0; i < n; ++i) p(i) = point(i);
  return p;
}

double eval_marginal(const SocGrid& grid, const Eigen::VectorXd& v, double e) {
  const double tol = edge_tol(grid);
  if (e < grid.lo - tol) return kInf;
  if (e > grid.hi + tol) return 0.0;
  const double x = (std::clamp(e, grid.lo, grid.hi) - grid.lo) / grid.step();
  const int i = std::min(static_cast<int>(x), grid.n - 2);
  const double w = x - i;
  if (w <= 0.0) return v(i);
  if (w >= 1.0) return v(i + 1);
  return v(i) + w * (v(i + 1) - v(i));
}

double inverse_marginal(const SocGrid& grid, const Eigen::VectorXd& v, double y) {
  if (v(grid.n - 1) >= y) return grid.hi;
  if (v(0) < y) return grid.lo;
  // v(lo_i) >= y > v(hi_i)
  int lo_i = 0, hi_i = grid.n - 1;
  while (hi_i - lo_i > 1) {
    const int mid = (lo_i + hi_i) / 2;
    if (v(mid) >= y)
      lo_i = mid;
    else
      hi_i = mid;
  }
  const double w = (v(lo_i) - y) / (v(lo_i) - v(hi_i));
  return grid.point(lo_i) + w * (grid.point(hi_i) - grid.point(lo_i));
}

Breakpoints breakpoints(const SocGrid& grid, const Eigen::VectorXd& v_next, const Storage& s,
                        double e) {
  const double eta = s.efficiency;
  Breakpoints c;
  c.c1 = eval_marginal(grid, v_next, e + s.p_max * eta) * eta;
  c.c2 = eval_marginal(grid, v_next, e) * eta;
  c.c3 = std::max(0.0, eval_marginal(grid, v_next, e) / eta + s.marginal_cost);
  c.c4 = std::max(0.0, eval_marginal(grid, v_next, e - s.p_max / eta) / eta + s.marginal_cost);
  return c;
}

double stage_marginal_at(const SocGrid& grid, const Eigen::VectorXd& v_next, double lambda,
                         const Storage& s, double e) {
  const double eta = s.efficiency;
  const Breakpoints c = breakpoints(grid, v_next, s, e);
  if (lambda <= c.c1) return eval_marginal(grid, v_next, e + s.p_max * eta);
  if (lambda <= c.c2) return lambda / eta;
  // Discharge cases are unreachable for negative prices.
  if (lambda <= c.c3 || lambda < 0.0) return eval_marginal(grid, v_next, e);
  if (lambda <= c.c4) return (lambda - s.marginal_cost) * eta;
  return eval_marginal(grid, v_next, e - s.p_max / eta);
}

Eigen::VectorXd stage_marginal(const SocGrid& grid, const Eigen::VectorXd& v_next, double lambda,
                               const Storage& s) {
  Eigen::VectorXd q(grid.n);
  for (int i = 0; i < grid.n; ++i) q(i) = stage_marginal_at(grid, v_next, lambda, s, grid.point(i));
  return q;
}

int ValueFunction::state_of(int t, double lambda) const {
  const auto& lv = levels[t];
  int best = 0;
  for (int j = 1; j < lv.size(); ++j)
    if (std::abs(lv(j) - lambda) < std::abs(lv(best) - lambda)) best = j;
  return marginal_mode ? 0 : best;
}

Eigen::VectorXd ValueFunction::expected_curve(int t, int prev_state) const {
  if (marginal_mode || states(t) == 1) return v[t][0];
  Eigen::VectorXd w;
  if (prev_state < 0 || t == 0)
    w = state_prob[t];
  else
    w = transitions[t - 1].row(prev_state).transpose();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(grid.n);
  for (int j = 0; j < states(t); ++j) out += w(j) * v[t][j];
  return out;
}

double ValueFunction::max_abs() const {
  double m = 0.0;
  for (int t = t_from; t < periods(); ++t)
    for (const auto& curve : v[t]) m = std::max(m, curve.cwiseAbs().maxCoeff());
  return m;
}

ValueFunction train_value_function(const MarkovPriceModel& model, const Storage& storage,
                                   const TrainOptions& options) {
  const int T = model.periods();
  if (T < 1) throw ValidationError("price model has no periods");
  if (options.t_from < 0 || options.t_from >= T) throw ValidationError("t_from out of horizon");
  for (const auto& P : model.transitions)
    for (int j = 0; j < P.rows(); ++j)
      if (std::abs(P.row(j).sum() - 1.0) > 1e-9 || (P.row(j).array() < 0.0).any())
        throw ValidationError("transition row is not stochastic");

  ValueFunction vf;
  vf.storage_id = storage.id;
  vf.grid = SocGrid::for_storage(storage, options.soc_points);
  vf.marginal_mode = options.marginal_mode;
  vf.levels = model.levels;
  vf.state_prob = model.marginal;
  vf.transitions = model.transitions;
  vf.t_from = options.t_from;
  vf.v.resize(T);
  const int n_e = vf.grid.n;

  const int last_states = options.marginal_mode ? 1 : model.bins(T - 1);
  vf.v[T - 1].assign(last_states, Eigen::VectorXd::Constant(n_e, options.terminal_value));

  Eigen::MatrixXd q;  // rows: next-period state, cols: grid
  for (int t = T - 2; t >= options.t_from; --t) {
    const int next_states = model.bins(t + 1);
    q.resize(next_states, n_e);
    for (int jn = 0; jn < next_states; ++jn) {
      const Eigen::VectorXd& v_next = vf.v[t + 1][options.marginal_mode ? 0 : jn];
      q.row(jn) = stage_marginal(vf.grid, v_next, model.levels[t + 1](jn), storage).transpose();
    }
    if (options.marginal_mode) {
      vf.v[t].assign(1, (model.marginal[t + 1].transpose() * q).transpose());
    } else {
      const Eigen::MatrixXd vt = model.transitions[t] * q;
      vf.v[t].resize(vt.rows());
      for (int j = 0; j < vt.rows(); ++j) vf.v[t][j] = vt.row(j).transpose();
    }
  }

  const double scale = std::max(1.0, vf.max_abs());
  for (int t = options.t_from; t < T; ++t)
    for (const auto& curve : vf.v[t]) {
      if (!curve.allFinite()) throw Error("value function has non-finite entries");
      for (int i = 0; i + 1 < n_e; ++i)
        if (curve(i + 1) > curve(i) + 1e-9 * scale)
          throw Error("value function slice is not non-increasing at t=" + std::to_string(t));
    }
  return vf;
}

PolicyDecision control_policy(const SocGrid& grid, const Eigen::VectorXd& v, double lambda,
                              double e_prev, const Storage& s) {
  const double tol = edge_tol(grid);
  if (e_prev < grid.lo - tol || e_prev > grid.hi + tol)
    throw ValidationError("control_policy: e_prev outside [e_min, e_max]");
  const double e = std::clamp(e_prev, grid.lo, grid.hi);
  const double eta = s.efficiency;
  const double charge_room = std::min(s.p_max, (grid.hi - e) / eta);
  const double discharge_room = std::min(s.p_max, (e - grid.lo) * eta);
  const Breakpoints c = breakpoints(grid, v, s, e);

  PolicyDecision d;
  if (lambda <= c.c1) {
    d.trigger_case = PolicyCase::charge_full;
    d.b = charge_room;
  } else if (lambda <= c.c2) {
    d.trigger_case = PolicyCase::charge_partial;
    d.b = std::clamp((inverse_marginal(grid, v, lambda / eta) - e) / eta, 0.0, charge_room);
  } else if (lambda <= c.c3 || lambda < 0.0) {
    d.trigger_case = PolicyCase::idle;
  } else if (lambda <= c.c4) {
    d.trigger_case = PolicyCase::discharge_partial;
    d.p = std::clamp((e - inverse_marginal(grid, v, (lambda - s.marginal_cost) * eta)) * eta, 0.0,
                     discharge_room);
  } else {
    d.trigger_case = PolicyCase::discharge_full;
    d.p = discharge_room;
  }
  if (lambda < 0.0) d.p = 0.0;
  d.e_next = std::clamp(e - d.p / eta + d.b * eta, grid.lo, grid.hi);
  return d;
}

PolicyDecision control_policy(const ValueFunction& vf, int t, double lambda, double e_prev,
                              const Storage& storage) {
  if (t < vf.t_from || t >= vf.periods()) throw ValidationError("control_policy: t out of horizon");
  return control_policy(vf.grid, vf.v[t][vf.state_of(t, lambda)], lambda, e_prev, storage);
}

double BidCurve::discharge_quantity() const {
  double q = 0.0;
  for (const auto& s : discharge) q += s.quantity;
  return q;
}

double BidCurve::charge_quantity() const {
  double q = 0.0;
  for (const auto& s : charge) q += s.quantity;
  return q;
}

BidCurve make_bids(const SocGrid& grid, const Eigen::VectorXd& v, double e_prev,
                   const Storage& s, int n_segments) {
  if (n_segments < 1) throw ValidationError("make_bids: n_segments must be >= 1");
  const double eta = s.efficiency;
  const double e = std::clamp(e_prev, grid.lo, grid.hi);
  const double dis_total = std::max(0.0, std::min(s.p_max, (e - grid.lo) * eta));
  const double chg_total = std::max(0.0, std::min(s.p_max, (grid.hi - e) / eta));
  BidCurve curve;
  if (dis_total > 0.0) {
    const double dq = dis_total / n_segments;
    for (int k = 0; k < n_segments; ++k) {
      const double mid = (k + 0.5) * dq;
      curve.discharge.push_back({dq, s.marginal_cost + eval_marginal(grid, v, e - mid / eta) / eta});
    }
  }
  if (chg_total > 0.0) {
    const double dq = chg_total / n_segments;
    for (int k = 0; k < n_segments; ++k) {
      const double mid = (k + 0.5) * dq;
      curve.charge.push_back({dq, eta * eval_marginal(grid, v, e + mid * eta)});
    }
  }
  return curve;
}

BidCurve make_bids(const ValueFunction& vf, int t, int price_state, double e_prev,
                   const Storage& storage, int n_segments) {
  if (t < vf.t_from || t >= vf.periods()) throw ValidationError("make_bids: t out of horizon");
  const Eigen::VectorXd curve =
      price_state < 0 ? vf.expected_curve(t, -1) : vf.v[t][std::min(price_state, vf.states(t) - 1)];
  return make_bids(vf.grid, curve, e_prev, storage, n_segments);
}

Eigen::VectorXd sigma_sensitivity_analytic(const SocGrid& grid, const Eigen::VectorXd& v_next,
                                           const Storage& storage, double mu, double sigma) {
  if (!(sigma > 0.0)) throw ValidationError("sigma must be > 0");
  const double eta = storage.efficiency;
  auto phi = [&](double c) { return std::isinf(c) ? 0.0 : normal_pdf((c - mu) / sigma); };
  Eigen::VectorXd out(grid.n);
  for (int i = 0; i < grid.n; ++i) {
    const Breakpoints c = breakpoints(grid, v_next, storage, grid.point(i));
    out(i) = (phi(c.c1) - phi(c.c2)) / eta + eta * (phi(c.c3) - phi(c.c4));
  }
  return out;
}

void write_value_function_csv(const std::string& path, const ValueFunction& vf) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  csv::Writer w(out);
  w.header({"t", "price_bin", "price", "soc", "v"});
  for (int t = vf.t_from; t < vf.periods(); ++t)
    for (int j = 0; j < vf.states(t); ++j)
      for (int i = 0; i < vf.grid.n; ++i) {
        const double price = vf.marginal_mode ? vf.state_prob[t].dot(vf.levels[t]) : vf.levels[t](j);
        w.field(t).field(j).field(price).field(vf.grid.point(i)).field(vf.v[t][j](i));
        w.end_row();
      }
}

}  // namespace esb
