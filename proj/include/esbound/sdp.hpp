#pragma once

#include "esbound/core_model.hpp"
#include "esbound/price_process.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace esb {

// Uniform SoC grid on [lo, hi].
struct SocGrid {
  double lo = 0.0;
  double hi = 1.0;
  int n = 101;

  SocGrid() = default;
  SocGrid(double lo_, double hi_, int n_);
  static SocGrid for_storage(const Storage& s, int n) { return {s.e_min, s.e_max, n}; }

  double step() const { return (hi - lo) / (n - 1); }
  double point(int i) const { return i == n - 1 ? hi : lo + i * step(); }
  Eigen::VectorXd points() const;
};

// Piecewise-linear marginal value at an arbitrary SoC. Below the grid the
// value is +inf (energy cannot be drawn), above it 0 (surplus is discarded).
double eval_marginal(const SocGrid& grid, const Eigen::VectorXd& v, double e);

// Largest SoC whose marginal value is at least y.
double inverse_marginal(const SocGrid& grid, const Eigen::VectorXd& v, double y);

struct Breakpoints {
  double c1, c2, c3, c4;
};
Breakpoints breakpoints(const SocGrid& grid, const Eigen::VectorXd& v_next, const Storage& s,
                        double e);

// One-stage marginal value q(e) given price lambda and next-stage curve.
double stage_marginal_at(const SocGrid& grid, const Eigen::VectorXd& v_next, double lambda,
                         const Storage& s, double e);
Eigen::VectorXd stage_marginal(const SocGrid& grid, const Eigen::VectorXd& v_next, double lambda,
                               const Storage& s);

struct ValueFunction {
  std::string storage_id;
  SocGrid grid;
  bool marginal_mode = false;
  std::vector<Eigen::VectorXd> levels;              // price of each state, per period
  std::vector<Eigen::VectorXd> state_prob;          // per period
  std::vector<Eigen::MatrixXd> transitions;         // as in MarkovPriceModel
  std::vector<std::vector<Eigen::VectorXd>> v;      // [t][state] curve over grid
  int t_from = 0;                                   // slices below are not trained

  int periods() const { return static_cast<int>(v.size()); }
  int states(int t) const { return static_cast<int>(v[t].size()); }
  double value(int t, int state, double e) const { return eval_marginal(grid, v[t][state], e); }

  // Nearest price state at period t for a raw price.
  int state_of(int t, double lambda) const;
  // Curve expected at period t given the state observed at t-1 (-1: unconditional).
  Eigen::VectorXd expected_curve(int t, int prev_state) const;
  double max_abs() const;
};

struct TrainOptions {
  int soc_points = 101;
  double terminal_value = 0.0;
  bool marginal_mode = false;
  int t_from = 0;
};

// Backward induction over the Markov price model. Throws Error if a produced slice
// is not non-increasing in SoC.
ValueFunction train_value_function(const MarkovPriceModel& model, const Storage& storage,
                                   const TrainOptions& options = {});

enum class PolicyCase { charge_full = 1, charge_partial = 2, idle = 3, discharge_partial = 4,
                        discharge_full = 5 };

struct PolicyDecision {
  double p = 0.0;
  double b = 0.0;
  double e_next = 0.0;
  PolicyCase trigger_case = PolicyCase::idle;
};

PolicyDecision control_policy(const SocGrid& grid, const Eigen::VectorXd& v, double lambda,
                              double e_prev, const Storage& storage);
PolicyDecision control_policy(const ValueFunction& vf, int t, double lambda, double e_prev,
                              const Storage& storage);

struct BidSegment {
  double quantity = 0.0;  // MWh
  double price = 0.0;     // $/MWh
};

// Discharge offers ascend in price, charge bids descend.
struct BidCurve {
  std::vector<BidSegment> discharge;
  std::vector<BidSegment> charge;

  double discharge_quantity() const;
  double charge_quantity() const;
};

BidCurve make_bids(const SocGrid& grid, const Eigen::VectorXd& v, double e_prev,
                   const Storage& storage, int n_segments = 10);
BidCurve make_bids(const ValueFunction& vf, int t, int price_state, double e_prev,
                   const Storage& storage, int n_segments = 10);

// d E[q(e)] / d sigma for lambda ~ N(mu, sigma^2), one entry per grid point.
Eigen::VectorXd sigma_sensitivity_analytic(const SocGrid& grid, const Eigen::VectorXd& v_next,
                                           const Storage& storage, double mu, double sigma);

void write_value_function_csv(const std::string& path, const ValueFunction& vf);

}  // namespace esb
