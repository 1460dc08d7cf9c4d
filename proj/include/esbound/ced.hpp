#pragma once

#include "esbound/core_model.hpp"
#include "esbound/qp_solver.hpp"

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace esb {

enum class Complementarity { relaxed, fix_and_resolve };

struct InfeasibleError : Error {
  InfeasibleError(const std::string& msg, std::string cause_, int k_ = 0)
      : Error(msg), cause(std::move(cause_)), k(k_) {}
  std::string cause;  // "balance", "flow", "ramp" or "solver"
  int k = 0;
};

// Realized state at the end of the period before the window.
struct DispatchHistory {
  Eigen::VectorXd g;  // per generator
  Eigen::VectorXd e;  // per storage
};

struct DispatchOptions {
  double epsilon = 0.1;
  int window_start = 0;
  std::optional<DispatchHistory> history;
  Complementarity mode = Complementarity::relaxed;
  bool hindsight = false;  // sigma ignored, mu taken as realized netload
};

struct DispatchProblem {
  const PowerSystem* system = nullptr;
  DispatchOptions options;
  int k = 0;  // first period
  int T = 0;  // horizon end (exclusive)
  double z = 0.0;
  Eigen::MatrixXd mu;     // nodes x window
  Eigen::MatrixXd sigma;  // nodes x window
  Eigen::VectorXd balance_rhs;  // window
  Eigen::MatrixXd flow_margin;  // lines x window, z * sigma_l
  Eigen::VectorXd e_prev;
  std::optional<Eigen::VectorXd> g_prev;
  bool has_reserve = false;

  // Layout.
  int ng = 0, nn = 0, ns = 0, nl = 0, block = 0;
  int W() const { return T - k; }
  int g_idx(int w, int i) const { return w * block + i; }
  int r_idx(int w, int i) const { return w * block + ng + i; }
  int inj_idx(int w, int n) const { return w * block + ng * (has_reserve ? 2 : 1) + n; }
  int p_idx(int w, int s) const { return inj_idx(w, nn) + s; }
  int b_idx(int w, int s) const { return inj_idx(w, nn) + ns + s; }
  int e_idx(int w, int s) const { return inj_idx(w, nn) + 2 * ns + s; }

  // Row bookkeeping (-1 when a row is omitted).
  std::vector<std::vector<int>> node_row, soc_row;          // equalities
  std::vector<int> balance_row, reserve_row;                // inequalities
  std::vector<std::vector<int>> flow_hi_row, flow_lo_row, cap_row, ramp_up_row, ramp_dn_row;

  QpProblem qp;
};

struct DualSet {
  Eigen::VectorXd lambda;      // window
  Eigen::MatrixXd omega_hi, omega_lo;  // lines x window
  Eigen::MatrixXd nu_lo, nu_hi;        // generators x window
  Eigen::MatrixXd kappa_up, kappa_dn;  // generators x window
  Eigen::MatrixXd alpha_lo, alpha_hi;  // storage discharge bounds
  Eigen::MatrixXd beta_lo, beta_hi;    // storage charge bounds
  Eigen::MatrixXd iota_lo, iota_hi;    // SoC bounds
  Eigen::MatrixXd theta;               // storages x window, value of stored energy
  Eigen::VectorXd reserve;
  Eigen::MatrixXd psi;                 // nodes x window, nodal balance multipliers
};

struct DispatchSolution {
  int k = 0;
  int T = 0;
  bool hindsight = false;
  Eigen::MatrixXd g, r, inj, p, b, e;  // rows: entity, cols: window period
  double objective = 0.0;
  DualSet duals;
  Eigen::MatrixXd lmp;  // nodes x window
  QpStatus status = QpStatus::numerical_error;
  int iterations = 0;
  int fix_rounds = 0;
  double primal_residual = 0.0, dual_residual = 0.0, complementarity = 0.0;
  double solve_seconds = 0.0;

  int W() const { return T - k; }
  bool clean() const;
  DispatchHistory history_at(int t) const;  // state at the end of absolute period t
};

DispatchProblem build_dispatch(const PowerSystem& system, const NetloadModel& netload,
                               const DispatchOptions& options);

DispatchSolution solve_dispatch(
    const DispatchProblem& problem,
    std::shared_ptr<const QpSolverBackend> backend = default_qp_backend());

inline DispatchSolution run_dispatch(const PowerSystem& system, const NetloadModel& netload,
                                     const DispatchOptions& options) {
  return solve_dispatch(build_dispatch(system, netload, options));
}

double compute_lmp(const PowerSystem& system, const DispatchSolution& solution, int node, int t);

enum class BoundTag { da, rt, hindsight };
std::string to_string(BoundTag tag);

struct BoundSeries {
  BoundTag tag = BoundTag::da;
  int k = 0;
  Eigen::MatrixXd theta;    // storages x (T - k), column w is period k + w
  Eigen::VectorXd ceiling;  // per storage, max over the window
  Eigen::MatrixXd lmp;      // storage-node LMP, storages x (T - k)
  Eigen::VectorXd lambda;   // balance dual, window
};

BoundSeries extract_bounds(const PowerSystem& system, const DispatchSolution& solution,
                           BoundTag tag = BoundTag::da);

struct BoundCheck {
  std::string storage_id;
  double max_theta = 0.0;
  double max_lmp = 0.0;
  double bound = 0.0;
  int argmax_t = 0;
  std::string binding_branch;  // "charge" or "discharge"
  bool ok = true;
};
std::vector<BoundCheck> bound_formula_check(const PowerSystem& system,
                                            const DispatchSolution& solution, double tol = 1e-6);

using DecayFn = std::function<double(int lead)>;
DecayFn linear_decay(int lookahead = 6);

struct RollingResult {
  BoundSeries da;
  std::vector<BoundSeries> rt;  // one per k
  BoundSeries hindsight;
  std::vector<BoundSeries> hindsight_tail;  // perfect foresight over [k, T] from the hindsight state
  DispatchSolution da_solution;
  DispatchSolution hindsight_solution;
  std::vector<DispatchSolution> rt_solutions;  // kept only when requested
};

// realized: nodes x T netload trace.
RollingResult rolling_bounds(const PowerSystem& system, const NetloadModel& netload,
                             double epsilon, const Eigen::MatrixXd& realized, const DecayFn& decay,
                             bool keep_solutions = false);

// Forecast seen at step k: realized for t <= k, blended and decayed afterwards.
NetloadModel rolling_forecast(const NetloadModel& netload, const Eigen::MatrixXd& realized, int k,
                              const DecayFn& decay);

void write_bounds_csv(const std::string& path, const PowerSystem& system,
                      const std::vector<std::pair<int, BoundSeries>>& series);
void write_lmp_csv(const std::string& path, const DispatchSolution& solution);
void write_problem_dump(const std::string& path, const DispatchProblem& problem);

}  // namespace esb
