#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <memory>
#include <string>

namespace esb {

using SpMat = Eigen::SparseMatrix<double>;

// min 1/2 x'Qx + c'x  s.t.  Ax = b,  Gx <= h,  lb <= x <= ub.
// Q is given in full symmetric form. Infinite bounds are allowed.
struct QpProblem {
  SpMat Q;
  Eigen::VectorXd c;
  SpMat A;
  Eigen::VectorXd b;
  SpMat G;
  Eigen::VectorXd h;
  Eigen::VectorXd lb;
  Eigen::VectorXd ub;

  int n() const { return static_cast<int>(c.size()); }
};

enum class QpStatus { optimal, primal_infeasible, dual_infeasible, max_iterations, numerical_error };
std::string to_string(QpStatus s);

// Multipliers follow L = f + y'(Ax - b) + z'(Gx - h) - zl'(x - lb) + zu'(x - ub),
// with z, zl, zu >= 0.
struct QpResult {
  QpStatus status = QpStatus::numerical_error;
  Eigen::VectorXd x, y, z, zl, zu;
  double objective = 0.0;
  int iterations = 0;
  double primal_residual = 0.0;  // relative
  double dual_residual = 0.0;    // relative
  double complementarity = 0.0;  // relative, worst single pair

  bool ok() const { return status == QpStatus::optimal; }
};

struct QpSettings {
  int max_iter = 80;
  double tol = 1e-9;
  double accept_tol = 1e-6;
  int refine_steps = 3;
  bool scale = true;
};

// Residuals of a candidate primal-dual point on the unscaled problem.
void qp_residuals(const QpProblem& p, QpResult& r);

class QpSolverBackend {
 public:
  virtual ~QpSolverBackend() = default;
  virtual QpResult solve(const QpProblem& problem, const QpSettings& settings) const = 0;
  virtual std::string name() const = 0;
};

// Mehrotra predictor-corrector interior point method on the sparse quasi-definite KKT system.
class InteriorPointQp : public QpSolverBackend {
 public:
  QpResult solve(const QpProblem& problem, const QpSettings& settings) const override;
  std::string name() const override { return "ipm"; }
};

std::shared_ptr<const QpSolverBackend> default_qp_backend();

}  // namespace esb
