#pragma once

#include "esbound/price_process.hpp"
#include "esbound/sdp.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace esb {

enum class AdjustScope { trajectory, per_period };

struct AdjustConfig {
  double delta = 0.01;  // $/MWh
  int max_iter = 64;
  AdjustScope scope = AdjustScope::trajectory;
  double tol = 1e-9;  // absolute slack in the bound check
  int t_from = 0;     // periods before this are not checked or trained
  // Price model used for retraining.
  int n_bins = 20;
  int n_scenarios = 400;
  int soc_points = 101;
  double ar1 = 0.0;
  std::uint64_t seed = 1;
};

struct AdjustTraceRow {
  int iteration = 0;
  double m_lo = 0.0;
  double m_hi = 0.0;
  bool violated = false;
};

struct AdjustResult {
  double multiplier = 0.0;        // trajectory scope
  Eigen::VectorXd multipliers;    // per period (equal entries in trajectory scope)
  Eigen::VectorXd sigma_star;
  ValueFunction value_function;
  bool flagged = false;           // even the deterministic price path breaks the bound
  int iterations = 0;             // bisection steps
  int retrains = 0;
  std::vector<AdjustTraceRow> trace;
};

// Largest excess of v over the per-period bound on [t_from, T).
double bound_excess(const ValueFunction& vf, const Eigen::VectorXd& bound);

// Bisection on the spread multiplier applied to sigma_da. `base` must be fitted on
// scenarios drawn at the full sigma_da around dap.
AdjustResult identify_interval(const Eigen::VectorXd& bound, const Eigen::VectorXd& sigma_da,
                               const Eigen::VectorXd& dap, const Storage& storage,
                               const MarkovPriceModel& base, const AdjustConfig& config);

// Convenience overload that draws scenarios and fits the base model itself.
AdjustResult identify_interval(const Eigen::VectorXd& bound, const Eigen::VectorXd& sigma_da,
                               const Eigen::VectorXd& dap, const Storage& storage,
                               const AdjustConfig& config);

// Upper bound on iterations for the given sigma and tolerance.
int bisection_budget(const Eigen::VectorXd& sigma_da, double delta);

// Discharge offers capped at M + theta/eta, charge bids at theta*eta. Quantities unchanged.
BidCurve cap_bids(const BidCurve& bids, double theta, const Storage& storage);

void write_adjust_trace_csv(const std::string& path, const std::vector<AdjustTraceRow>& trace);

}  // namespace esb
