#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace esb {

double normal_pdf(double z);
double normal_cdf(double z);
// Inverse standard normal CDF. Throws std::domain_error outside (0, 1).
double normal_quantile(double p);

// splitmix64 mix of (master, index); used for every per-item stream.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

struct PriceScenarioSet {
  Eigen::VectorXd dap;        // $/MWh per period
  Eigen::VectorXd sigma;      // $/MWh per period
  Eigen::MatrixXd scenarios;  // count x T
  std::uint64_t seed = 0;

  int count() const { return static_cast<int>(scenarios.rows()); }
  int periods() const { return static_cast<int>(scenarios.cols()); }
};

// Gaussian prices around the DAP. ar1 = 0 gives independent periods; otherwise
// the standardized noise follows x_t = ar1 x_{t-1} + sqrt(1 - ar1^2) eps_t.
PriceScenarioSet generate_rtp_scenarios(const Eigen::VectorXd& dap, const Eigen::VectorXd& sigma,
                                        int count, std::uint64_t seed, double ar1 = 0.0);

struct MarkovPriceModel {
  std::vector<Eigen::VectorXd> levels;       // per period, ascending bin prices
  std::vector<Eigen::MatrixXd> transitions;  // T-1 entries; [t](j, j') from period t to t+1
  std::vector<Eigen::VectorXd> marginal;     // per period bin probabilities
  std::vector<bool> collapsed;               // period had (near) constant prices

  int periods() const { return static_cast<int>(levels.size()); }
  int bins(int t) const { return static_cast<int>(levels[t].size()); }
  bool any_collapsed() const;

  // Same transitions, prices spread around dap by factor m: dap + m (level - dap).
  MarkovPriceModel scaled(const Eigen::VectorXd& dap, double m) const;
  MarkovPriceModel scaled(const Eigen::VectorXd& dap, const Eigen::VectorXd& m) const;

  // One bin per period with probability one.
  static MarkovPriceModel deterministic(const Eigen::VectorXd& path);
};

// Equal-width bins per period over the sample range, level = conditional sample mean.
MarkovPriceModel fit_markov(const Eigen::MatrixXd& scenarios, int n_bins);
inline MarkovPriceModel fit_markov(const PriceScenarioSet& set, int n_bins) {
  return fit_markov(set.scenarios, n_bins);
}

// Largest total-variation distance between the fitted marginal at t+1 and the
// marginal at t pushed through the transition, over all t.
double propagation_tv(const MarkovPriceModel& model);

void write_scenarios_csv(const std::string& path, const PriceScenarioSet& set);
Eigen::MatrixXd read_scenarios_csv(const std::string& path);

}  // namespace esb
