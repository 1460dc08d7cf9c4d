#include "esbound/qp_solver.hpp"

#include <Eigen/OrderingMethods>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace esb {

std::string to_string(QpStatus s) {
  switch (s) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::primal_infeasible: return "primal_infeasible";
    case QpStatus::dual_infeasible: return "dual_infeasible";
    case QpStatus::max_iterations: return "max_iterations";
    case QpStatus::numerical_error: return "numerical_error";
  }
  return "unknown";
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

double finite_inf_norm(const Eigen::VectorXd& v) {
  double m = 0.0;
  for (int i = 0; i < v.size(); ++i)
    if (std::isfinite(v(i))) m = std::max(m, std::abs(v(i)));
  return m;
}

// Column-wise infinity norms of a sparse matrix.
void col_norms(const SpMat& M, Eigen::VectorXd& out) {
  for (int j = 0; j < M.outerSize(); ++j)
    for (SpMat::InnerIterator it(M, j); it; ++it) out(j) = std::max(out(j), std::abs(it.value()));
}

void row_norms(const SpMat& M, Eigen::VectorXd& out) {
  for (int j = 0; j < M.outerSize(); ++j)
    for (SpMat::InnerIterator it(M, j); it; ++it)
      out(it.row()) = std::max(out(it.row()), std::abs(it.value()));
}

struct Scaling {
  Eigen::VectorXd D;   // variables
  Eigen::VectorXd EA;  // equality rows
  Eigen::VectorXd EG;  // inequality rows
  double cs = 1.0;     // objective
};

Scaling ruiz(QpProblem& p, bool enabled) {
  const int n = p.n();
  Scaling sc{Eigen::VectorXd::Ones(n), Eigen::VectorXd::Ones(p.A.rows()),
             Eigen::VectorXd::Ones(p.G.rows()), 1.0};
  if (!enabled) return sc;
  for (int iter = 0; iter < 15; ++iter) {
    Eigen::VectorXd cn = Eigen::VectorXd::Zero(n);
    col_norms(p.Q, cn);
    col_norms(p.A, cn);
    col_norms(p.G, cn);
    Eigen::VectorXd an = Eigen::VectorXd::Zero(p.A.rows());
    Eigen::VectorXd gn = Eigen::VectorXd::Zero(p.G.rows());
    row_norms(p.A, an);
    row_norms(p.G, gn);
    auto inv_sqrt = [](double v) { return v > 1e-12 ? 1.0 / std::sqrt(v) : 1.0; };
    const Eigen::VectorXd d = cn.unaryExpr(inv_sqrt);
    const Eigen::VectorXd ea = an.unaryExpr(inv_sqrt);
    const Eigen::VectorXd eg = gn.unaryExpr(inv_sqrt);
    p.Q = d.asDiagonal() * p.Q * d.asDiagonal();
    p.A = ea.asDiagonal() * p.A * d.asDiagonal();
    p.G = eg.asDiagonal() * p.G * d.asDiagonal();
    p.c = p.c.cwiseProduct(d);
    p.b = p.b.cwiseProduct(ea);
    p.h = p.h.cwiseProduct(eg);
    p.lb = p.lb.cwiseQuotient(d);
    p.ub = p.ub.cwiseQuotient(d);
    sc.D = sc.D.cwiseProduct(d);
    sc.EA = sc.EA.cwiseProduct(ea);
    sc.EG = sc.EG.cwiseProduct(eg);
    if ((cn.array() - 1.0).abs().maxCoeff() < 1e-2 && (an.size() == 0 || (an.array() - 1.0).abs().maxCoeff() < 1e-2) &&
        (gn.size() == 0 || (gn.array() - 1.0).abs().maxCoeff() < 1e-2))
      break;
  }
  double qmax = 0.0;
  for (int j = 0; j < p.Q.outerSize(); ++j)
    for (SpMat::InnerIterator it(p.Q, j); it; ++it) qmax = std::max(qmax, std::abs(it.value()));
  sc.cs = 1.0 / std::max({1.0, inf_norm(p.c), qmax});
  p.c *= sc.cs;
  p.Q *= sc.cs;
  return sc;
}

// Interior point core on an already reduced and scaled problem.
class Ipm {
 public:
  Ipm(const QpProblem& p, const QpSettings& st) : p_(p), st_(st) {
    n_ = p.n();
    me_ = static_cast<int>(p.A.rows());
    mi_ = static_cast<int>(p.G.rows());
    for (int j = 0; j < n_; ++j) {
      if (std::isfinite(p.lb(j))) L_.push_back(j);
      if (std::isfinite(p.ub(j))) U_.push_back(j);
    }
  }

  QpResult run();

 private:
  void assemble_pattern();
  void set_diagonal(double rho, double delta);
  bool factor();
  void solve_kkt(const Eigen::VectorXd& rhs, Eigen::VectorXd& sol);
  void direction(const Eigen::VectorXd& rsz, const Eigen::VectorXd& rlz, const Eigen::VectorXd& ruz);
  double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) const;

  const QpProblem& p_;
  const QpSettings& st_;
  int n_ = 0, me_ = 0, mi_ = 0;
  std::vector<int> L_, U_;

  SpMat K_;
  std::vector<double*> diag_;
  Eigen::VectorXd qdiag_;
  Eigen::VectorXd kdiag_true_;
  double rho_ = 1e-9, delta_ = 1e-9;
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;

  // Iterates.
  Eigen::VectorXd x_, y_, z_, s_, zl_, sl_, zu_, su_;
  // Residuals.
  Eigen::VectorXd rd_, rp_, rg_, rl_, ru_;
  // Direction.
  Eigen::VectorXd dx_, dy_, dz_, ds_, dzl_, dsl_, dzu_, dsu_;
};

void Ipm::assemble_pattern() {
  const int N = n_ + me_ + mi_;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(p_.Q.nonZeros() + p_.A.nonZeros() + p_.G.nonZeros() + N);
  qdiag_ = Eigen::VectorXd::Zero(n_);
  for (int j = 0; j < p_.Q.outerSize(); ++j)
    for (SpMat::InnerIterator it(p_.Q, j); it; ++it) {
      if (it.row() > it.col()) trip.emplace_back(it.row(), it.col(), it.value());
      if (it.row() == it.col()) qdiag_(j) += it.value();
    }
  for (int j = 0; j < p_.A.outerSize(); ++j)
    for (SpMat::InnerIterator it(p_.A, j); it; ++it)
      trip.emplace_back(n_ + it.row(), it.col(), it.value());
  for (int j = 0; j < p_.G.outerSize(); ++j)
    for (SpMat::InnerIterator it(p_.G, j); it; ++it)
      trip.emplace_back(n_ + me_ + it.row(), it.col(), it.value());
  for (int i = 0; i < N; ++i) trip.emplace_back(i, i, 0.0);
  K_.resize(N, N);
  K_.setFromTriplets(trip.begin(), trip.end());
  K_.makeCompressed();
  diag_.assign(N, nullptr);
  for (int j = 0; j < N; ++j) diag_[j] = &K_.coeffRef(j, j);
  kdiag_true_ = Eigen::VectorXd::Zero(N);
  ldlt_.analyzePattern(K_);
}

void Ipm::set_diagonal(double rho, double delta) {
  Eigen::VectorXd hd = qdiag_;
  for (std::size_t k = 0; k < L_.size(); ++k) hd(L_[k]) += zl_(k) / sl_(k);
  for (std::size_t k = 0; k < U_.size(); ++k) hd(U_[k]) += zu_(k) / su_(k);
  for (int j = 0; j < n_; ++j) {
    kdiag_true_(j) = hd(j);
    *diag_[j] = hd(j) + rho;
  }
  for (int i = 0; i < me_; ++i) {
    kdiag_true_(n_ + i) = 0.0;
    *diag_[n_ + i] = -delta;
  }
  for (int i = 0; i < mi_; ++i) {
    const double w = s_(i) / z_(i);
    kdiag_true_(n_ + me_ + i) = -w;
    *diag_[n_ + me_ + i] = -w - delta;
  }
}

bool Ipm::factor() {
  for (int attempt = 0; attempt < 6; ++attempt) {
    set_diagonal(rho_, delta_);
    ldlt_.factorize(K_);
    if (ldlt_.info() == Eigen::Success) {
      const Eigen::VectorXd d = ldlt_.vectorD();
      bool signs_ok = d.allFinite();
      if (signs_ok) return true;
    }
    rho_ *= 100.0;
    delta_ *= 100.0;
  }
  return false;
}

void Ipm::solve_kkt(const Eigen::VectorXd& rhs, Eigen::VectorXd& sol) {
  sol = ldlt_.solve(rhs);
  for (int k = 0; k < st_.refine_steps; ++k) {
    // Residual against the unregularized matrix.
    Eigen::VectorXd Ks = K_.selfadjointView<Eigen::Lower>() * sol;
    for (int i = 0; i < sol.size(); ++i) Ks(i) += (kdiag_true_(i) - *diag_[i]) * sol(i);
    const Eigen::VectorXd r = rhs - Ks;
    if (inf_norm(r) <= 1e-14 * (1.0 + inf_norm(rhs))) break;
    sol += ldlt_.solve(r);
  }
}

void Ipm::direction(const Eigen::VectorXd& rsz, const Eigen::VectorXd& rlz,
                    const Eigen::VectorXd& ruz) {
  const int N = n_ + me_ + mi_;
  Eigen::VectorXd rhs(N);
  Eigen::VectorXd rx = -rd_;
  for (std::size_t k = 0; k < L_.size(); ++k)
    rx(L_[k]) -= (rlz(k) + zl_(k) * rl_(k)) / sl_(k);
  for (std::size_t k = 0; k < U_.size(); ++k)
    rx(U_[k]) -= (-ruz(k) + zu_(k) * ru_(k)) / su_(k);
  rhs.head(n_) = rx;
  rhs.segment(n_, me_) = -rp_;
  rhs.tail(mi_) = -rg_ + rsz.cwiseQuotient(z_);
  Eigen::VectorXd sol;
  solve_kkt(rhs, sol);
  dx_ = sol.head(n_);
  dy_ = sol.segment(n_, me_);
  dz_ = sol.tail(mi_);
  ds_ = -rg_ - p_.G * dx_;
  dsl_.resize(L_.size());
  dzl_.resize(L_.size());
  for (std::size_t k = 0; k < L_.size(); ++k) {
    dsl_(k) = dx_(L_[k]) + rl_(k);
    dzl_(k) = (-rlz(k) - zl_(k) * dsl_(k)) / sl_(k);
  }
  dsu_.resize(U_.size());
  dzu_.resize(U_.size());
  for (std::size_t k = 0; k < U_.size(); ++k) {
    dsu_(k) = -ru_(k) - dx_(U_[k]);
    dzu_(k) = (-ruz(k) - zu_(k) * dsu_(k)) / su_(k);
  }
}

double Ipm::max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) const {
  double a = 1.0;
  for (int i = 0; i < v.size(); ++i)
    if (dv(i) < 0.0) a = std::min(a, -v(i) / dv(i));
  return a;
}

QpResult Ipm::run() {
  QpResult res;
  const int nl = static_cast<int>(L_.size());
  const int nu = static_cast<int>(U_.size());
  const int m_total = mi_ + nl + nu;

  assemble_pattern();

  // Starting point from a regularized least-squares style solve.
  x_ = Eigen::VectorXd::Zero(n_);
  y_ = Eigen::VectorXd::Zero(me_);
  s_ = Eigen::VectorXd::Ones(mi_);
  z_ = Eigen::VectorXd::Ones(mi_);
  sl_ = Eigen::VectorXd::Ones(nl);
  zl_ = Eigen::VectorXd::Ones(nl);
  su_ = Eigen::VectorXd::Ones(nu);
  zu_ = Eigen::VectorXd::Ones(nu);
  {
    if (!factor()) {
      res.status = QpStatus::numerical_error;
      return res;
    }
    Eigen::VectorXd rhs(n_ + me_ + mi_);
    rhs.head(n_) = -p_.c;
    for (int k = 0; k < nl; ++k) rhs(L_[k]) += p_.lb(L_[k]);
    for (int k = 0; k < nu; ++k) rhs(U_[k]) += p_.ub(U_[k]);
    rhs.segment(n_, me_) = p_.b;
    rhs.tail(mi_) = p_.h;
    Eigen::VectorXd sol;
    solve_kkt(rhs, sol);
    x_ = sol.head(n_);
    for (int j = 0; j < n_; ++j) {
      const double lo = p_.lb(j), hi = p_.ub(j);
      if (std::isfinite(lo) && std::isfinite(hi)) {
        const double margin = std::min(1.0, 0.25 * (hi - lo));
        x_(j) = std::clamp(x_(j), lo + margin, hi - margin);
      } else if (std::isfinite(lo)) {
        x_(j) = std::max(x_(j), lo + 1.0);
      } else if (std::isfinite(hi)) {
        x_(j) = std::min(x_(j), hi - 1.0);
      }
    }
    const Eigen::VectorXd slack = p_.h - p_.G * x_;
    for (int i = 0; i < mi_; ++i) s_(i) = std::max(slack(i), 1.0);
    for (int k = 0; k < nl; ++k) sl_(k) = x_(L_[k]) - p_.lb(L_[k]);
    for (int k = 0; k < nu; ++k) su_(k) = p_.ub(U_[k]) - x_(U_[k]);
  }

  const double bnorm = 1.0 + std::max(inf_norm(p_.b), finite_inf_norm(p_.h));
  const double cnorm = 1.0 + inf_norm(p_.c);
  int stalls = 0;
  double best_merit = kInf;
  Eigen::VectorXd rsz, rlz, ruz;
  struct Iterate {
    Eigen::VectorXd x, y, z, s, zl, sl, zu, su;
    double pres = kInf, dres = kInf, gap = kInf;
  } best;
  const auto restore_best = [&] {
    if (!std::isfinite(best.pres)) return;
    x_ = best.x, y_ = best.y, z_ = best.z, s_ = best.s;
    zl_ = best.zl, sl_ = best.sl, zu_ = best.zu, su_ = best.su;
    res.primal_residual = best.pres;
    res.dual_residual = best.dres;
    res.complementarity = best.gap;
  };

  for (int iter = 0; iter <= st_.max_iter; ++iter) {
    res.iterations = iter;
    rd_ = p_.Q * x_ + p_.c + p_.A.transpose() * y_ + p_.G.transpose() * z_;
    for (int k = 0; k < nl; ++k) rd_(L_[k]) -= zl_(k);
    for (int k = 0; k < nu; ++k) rd_(U_[k]) += zu_(k);
    rp_ = p_.A * x_ - p_.b;
    rg_ = p_.G * x_ + s_ - p_.h;
    rl_.resize(nl);
    for (int k = 0; k < nl; ++k) rl_(k) = x_(L_[k]) - p_.lb(L_[k]) - sl_(k);
    ru_.resize(nu);
    for (int k = 0; k < nu; ++k) ru_(k) = x_(U_[k]) + su_(k) - p_.ub(U_[k]);

    const double mu = m_total ? (s_.dot(z_) + sl_.dot(zl_) + su_.dot(zu_)) / m_total : 0.0;
    const double pres = std::max({inf_norm(rp_), inf_norm(rg_), inf_norm(rl_), inf_norm(ru_)}) / bnorm;
    const double dres = inf_norm(rd_) / cnorm;
    const double fval = 0.5 * x_.dot(p_.Q * x_) + p_.c.dot(x_);
    const double gap = mu / (1.0 + std::abs(fval));
    res.primal_residual = pres;
    res.dual_residual = dres;
    res.complementarity = gap;
    if (pres <= st_.tol && dres <= st_.tol && gap <= st_.tol) {
      res.status = QpStatus::optimal;
      break;
    }
    if (std::max({pres, dres, gap}) < std::max({best.pres, best.dres, best.gap}))
      best = {x_, y_, z_, s_, zl_, sl_, zu_, su_, pres, dres, gap};
    if (iter == st_.max_iter) {
      res.status = QpStatus::max_iterations;
      restore_best();
      break;
    }
    const double zmax = std::max({inf_norm(z_), inf_norm(zl_), inf_norm(zu_)});
    if (zmax > 1e14 && pres > st_.accept_tol) {
      res.status = QpStatus::primal_infeasible;
      break;
    }
    if (inf_norm(x_) > 1e14 && dres > st_.accept_tol) {
      res.status = QpStatus::dual_infeasible;
      break;
    }

    if (!factor()) {
      res.status = QpStatus::numerical_error;
      restore_best();
      break;
    }

    // Predictor.
    rsz = s_.cwiseProduct(z_);
    rlz = sl_.cwiseProduct(zl_);
    ruz = su_.cwiseProduct(zu_);
    direction(rsz, rlz, ruz);
    double a_aff = std::min({max_step(s_, ds_), max_step(z_, dz_), max_step(sl_, dsl_),
                             max_step(zl_, dzl_), max_step(su_, dsu_), max_step(zu_, dzu_)});
    const double mu_aff =
        m_total ? ((s_ + a_aff * ds_).dot(z_ + a_aff * dz_) +
                   (sl_ + a_aff * dsl_).dot(zl_ + a_aff * dzl_) +
                   (su_ + a_aff * dsu_).dot(zu_ + a_aff * dzu_)) /
                      m_total
                : 0.0;
    const double sigma = mu > 0 ? std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3) : 0.0;

    // Corrector.
    rsz = s_.cwiseProduct(z_) + ds_.cwiseProduct(dz_) - Eigen::VectorXd::Constant(mi_, sigma * mu);
    rlz = sl_.cwiseProduct(zl_) + dsl_.cwiseProduct(dzl_) - Eigen::VectorXd::Constant(nl, sigma * mu);
    ruz = su_.cwiseProduct(zu_) + dsu_.cwiseProduct(dzu_) - Eigen::VectorXd::Constant(nu, sigma * mu);
    direction(rsz, rlz, ruz);
    const double a_max = std::min({max_step(s_, ds_), max_step(z_, dz_), max_step(sl_, dsl_),
                                   max_step(zl_, dzl_), max_step(su_, dsu_), max_step(zu_, dzu_)});
    const double a = std::min(1.0, 0.995 * a_max);

    x_ += a * dx_;
    y_ += a * dy_;
    z_ += a * dz_;
    s_ += a * ds_;
    zl_ += a * dzl_;
    sl_ += a * dsl_;
    zu_ += a * dzu_;
    su_ += a * dsu_;

    const double merit = std::max({pres, dres, gap});
    if (a < 1e-8 && merit >= best_merit) {
      if (++stalls >= 5) {
        res.status = pres > st_.accept_tol ? QpStatus::primal_infeasible : QpStatus::numerical_error;
        restore_best();
        break;
      }
    } else {
      stalls = 0;
    }
    best_merit = std::min(best_merit, merit);
  }
  res.x = x_;
  res.y = y_;
  res.z = z_;
  res.zl = Eigen::VectorXd::Zero(n_);
  res.zu = Eigen::VectorXd::Zero(n_);
  for (int k = 0; k < nl; ++k) res.zl(L_[k]) = zl_(k);
  for (int k = 0; k < nu; ++k) res.zu(U_[k]) = zu_(k);
  return res;
}

}  // namespace

void qp_residuals(const QpProblem& p, QpResult& r) {
  const Eigen::VectorXd Qx = p.Q * r.x;
  r.objective = 0.5 * r.x.dot(Qx) + p.c.dot(r.x);
  Eigen::VectorXd rd = Qx + p.c - r.zl + r.zu;
  if (p.A.rows()) rd += p.A.transpose() * r.y;
  if (p.G.rows()) rd += p.G.transpose() * r.z;
  double neg = 0.0;
  if (r.z.size()) neg = std::max(neg, -r.z.minCoeff());
  if (r.zl.size()) neg = std::max(neg, -r.zl.minCoeff());
  if (r.zu.size()) neg = std::max(neg, -r.zu.minCoeff());
  const double dscale = 1.0 + std::max(inf_norm(p.c), inf_norm(Qx));
  r.dual_residual = std::max(inf_norm(rd), neg) / dscale;

  double pv = 0.0;
  if (p.A.rows()) pv = std::max(pv, inf_norm(p.A * r.x - p.b));
  Eigen::VectorXd gslack;
  if (p.G.rows()) {
    gslack = p.h - p.G * r.x;
    pv = std::max(pv, std::max(0.0, -gslack.minCoeff()));
  }
  double comp = 0.0;
  for (int j = 0; j < p.n(); ++j) {
    if (std::isfinite(p.lb(j))) {
      pv = std::max(pv, p.lb(j) - r.x(j));
      comp = std::max(comp, std::abs(r.zl(j) * (r.x(j) - p.lb(j))));
    } else {
      comp = std::max(comp, std::abs(r.zl(j)));
    }
    if (std::isfinite(p.ub(j))) {
      pv = std::max(pv, r.x(j) - p.ub(j));
      comp = std::max(comp, std::abs(r.zu(j) * (p.ub(j) - r.x(j))));
    } else {
      comp = std::max(comp, std::abs(r.zu(j)));
    }
  }
  for (int i = 0; i < gslack.size(); ++i) comp = std::max(comp, std::abs(r.z(i) * gslack(i)));
  const double pscale = 1.0 + std::max({inf_norm(p.b), finite_inf_norm(p.h), inf_norm(r.x)});
  r.primal_residual = pv / pscale;
  r.complementarity = comp / (1.0 + std::abs(r.objective));
}

QpResult InteriorPointQp::solve(const QpProblem& problem, const QpSettings& settings) const {
  const int n = problem.n();
  if (problem.Q.rows() != n || problem.Q.cols() != n || problem.lb.size() != n ||
      problem.ub.size() != n || problem.A.cols() != n || problem.G.cols() != n ||
      problem.A.rows() != problem.b.size() || problem.G.rows() != problem.h.size())
    throw std::invalid_argument("QpProblem dimensions are inconsistent");

  // Eliminate fixed variables, including ranges too narrow for the barrier.
  const auto pinned = [&](int j) {
    return std::isfinite(problem.lb(j)) && std::isfinite(problem.ub(j)) &&
           problem.ub(j) - problem.lb(j) <= 1e-10 * std::max(1.0, std::abs(problem.lb(j)));
  };
  std::vector<int> free_idx;
  Eigen::VectorXd x_fix = Eigen::VectorXd::Zero(n);
  bool bad_bounds = false;
  for (int j = 0; j < n; ++j) {
    if (problem.lb(j) > problem.ub(j)) bad_bounds = true;
    if (pinned(j))
      x_fix(j) = 0.5 * (problem.lb(j) + problem.ub(j));
    else
      free_idx.push_back(j);
  }
  QpResult out;
  if (bad_bounds) {
    out.status = QpStatus::primal_infeasible;
    out.x = x_fix;
    return out;
  }
  const int nf = static_cast<int>(free_idx.size());
  SpMat sel(n, nf);
  {
    std::vector<Eigen::Triplet<double>> t;
    for (int k = 0; k < nf; ++k) t.emplace_back(free_idx[k], k, 1.0);
    sel.setFromTriplets(t.begin(), t.end());
  }
  QpProblem red;
  red.Q = SpMat(sel.transpose() * problem.Q * sel);
  red.c = sel.transpose() * (problem.c + problem.Q * x_fix);
  red.A = problem.A * sel;
  red.b = problem.b - problem.A * x_fix;
  red.G = problem.G * sel;
  red.h = problem.h - problem.G * x_fix;
  red.lb = sel.transpose() * problem.lb;
  red.ub = sel.transpose() * problem.ub;
  // sel' * inf vectors produce inf * 0 = nan for other entries; rebuild directly.
  for (int k = 0; k < nf; ++k) {
    red.lb(k) = problem.lb(free_idx[k]);
    red.ub(k) = problem.ub(free_idx[k]);
  }

  const Scaling sc = ruiz(red, settings.scale);
  Ipm ipm(red, settings);
  QpResult inner = ipm.run();

  out.status = inner.status;
  out.iterations = inner.iterations;
  out.x = x_fix;
  out.zl = Eigen::VectorXd::Zero(n);
  out.zu = Eigen::VectorXd::Zero(n);
  if (inner.x.size() == nf) {
    for (int k = 0; k < nf; ++k) {
      const int j = free_idx[k];
      out.x(j) = sc.D(k) * inner.x(k);
      out.zl(j) = inner.zl(k) / (sc.D(k) * sc.cs);
      out.zu(j) = inner.zu(k) / (sc.D(k) * sc.cs);
    }
    out.y = sc.EA.cwiseProduct(inner.y) / sc.cs;
    out.z = sc.EG.cwiseProduct(inner.z) / sc.cs;
  } else {
    out.y = Eigen::VectorXd::Zero(problem.A.rows());
    out.z = Eigen::VectorXd::Zero(problem.G.rows());
  }
  if (nf < n) {
    Eigen::VectorXd rc = problem.Q * out.x + problem.c;
    if (problem.A.rows()) rc += problem.A.transpose() * out.y;
    if (problem.G.rows()) rc += problem.G.transpose() * out.z;
    for (int j = 0; j < n; ++j)
      if (pinned(j)) {
        out.zl(j) = std::max(rc(j), 0.0);
        out.zu(j) = std::max(-rc(j), 0.0);
      }
  }
  qp_residuals(problem, out);
  // A stalled run still counts when its best point meets the acceptance tolerance.
  const bool stalled = out.status == QpStatus::max_iterations || out.status == QpStatus::numerical_error;
  if (stalled && out.x.size() == n && out.primal_residual <= settings.accept_tol &&
      out.dual_residual <= settings.accept_tol && out.complementarity <= 10 * settings.accept_tol)
    out.status = QpStatus::optimal;
  return out;
}

std::shared_ptr<const QpSolverBackend> default_qp_backend() {
  static const auto backend = std::make_shared<InteriorPointQp>();
  return backend;
}

}  // namespace esb
