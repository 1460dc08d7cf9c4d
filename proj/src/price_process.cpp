#include "esbound/price_process.hpp"

#include "esbound/core_model.hpp"
#include "esbound/csv.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace esb {

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile: p must lie in (0, 1)");
  if (p == 0.5) return 0.0;
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

PriceScenarioSet generate_rtp_scenarios(const Eigen::VectorXd& dap, const Eigen::VectorXd& sigma,
                                        int count, std::uint64_t seed, double ar1) {
  if (count < 1) throw ValidationError("scenario count must be >= 1");
  if (dap.size() != sigma.size()) throw ValidationError("dap and sigma lengths differ");
  if ((sigma.array() < 0.0).any() || !sigma.allFinite())
    throw ValidationError("price sigma must be finite and >= 0");
  if (!(ar1 > -1.0 && ar1 < 1.0)) throw ValidationError("ar1 must lie in (-1, 1)");
  const int T = static_cast<int>(dap.size());
  PriceScenarioSet set;
  set.dap = dap;
  set.sigma = sigma;
  set.seed = seed;
  set.scenarios.resize(count, T);
  const double innov = std::sqrt(1.0 - ar1 * ar1);
  for (int i = 0; i < count; ++i) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    std::normal_distribution<double> normal(0.0, 1.0);
    double x = 0.0;
    for (int t = 0; t < T; ++t) {
      const double e = normal(rng);
      x = t == 0 ? e : ar1 * x + innov * e;
      set.scenarios(i, t) = dap(t) + sigma(t) * x;
    }
  }
  return set;
}

bool MarkovPriceModel::any_collapsed() const {
  return std::find(collapsed.begin(), collapsed.end(), true) != collapsed.end();
}

MarkovPriceModel MarkovPriceModel::scaled(const Eigen::VectorXd& dap, double m) const {
  if (dap.size() != periods()) throw ValidationError("scaled: dap length differs from model");
  MarkovPriceModel out = *this;
  for (int t = 0; t < periods(); ++t)
    out.levels[t] = (dap(t) + m * (levels[t].array() - dap(t))).matrix();
  return out;
}

MarkovPriceModel MarkovPriceModel::scaled(const Eigen::VectorXd& dap,
                                          const Eigen::VectorXd& m) const {
  if (dap.size() != periods() || m.size() != periods())
    throw ValidationError("scaled: vector length differs from model");
  MarkovPriceModel out = *this;
  for (int t = 0; t < periods(); ++t)
    out.levels[t] = (dap(t) + m(t) * (levels[t].array() - dap(t))).matrix();
  return out;
}

MarkovPriceModel MarkovPriceModel::deterministic(const Eigen::VectorXd& path) {
  MarkovPriceModel m;
  const int T = static_cast<int>(path.size());
  for (int t = 0; t < T; ++t) {
    m.levels.push_back(Eigen::VectorXd::Constant(1, path(t)));
    m.marginal.push_back(Eigen::VectorXd::Ones(1));
    m.collapsed.push_back(true);
  }
  for (int t = 0; t + 1 < T; ++t) m.transitions.push_back(Eigen::MatrixXd::Ones(1, 1));
  return m;
}

MarkovPriceModel fit_markov(const Eigen::MatrixXd& scenarios, int n_bins) {
  if (n_bins < 2) throw ValidationError("fit_markov: n_bins must be >= 2");
  const int N = static_cast<int>(scenarios.rows());
  const int T = static_cast<int>(scenarios.cols());
  if (N < 10 * n_bins) throw ValidationError("fit_markov: need at least 10 scenarios per bin");
  if (T < 1) throw ValidationError("fit_markov: empty horizon");

  MarkovPriceModel model;
  Eigen::MatrixXi bin(N, T);
  for (int t = 0; t < T; ++t) {
    const auto col = scenarios.col(t);
    const double lo = col.minCoeff();
    const double hi = col.maxCoeff();
    const double scale = std::max(1.0, std::max(std::abs(lo), std::abs(hi)));
    if (hi - lo <= 1e-12 * scale) {
      model.levels.push_back(Eigen::VectorXd::Constant(1, col.mean()));
      model.marginal.push_back(Eigen::VectorXd::Ones(1));
      model.collapsed.push_back(true);
      bin.col(t).setZero();
      continue;
    }
    const double width = (hi - lo) / n_bins;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(n_bins);
    Eigen::VectorXd cnt = Eigen::VectorXd::Zero(n_bins);
    for (int i = 0; i < N; ++i) {
      int j = static_cast<int>((col(i) - lo) / width);
      j = std::clamp(j, 0, n_bins - 1);
      bin(i, t) = j;
      sum(j) += col(i);
      cnt(j) += 1.0;
    }
    Eigen::VectorXd level(n_bins);
    for (int j = 0; j < n_bins; ++j)
      level(j) = cnt(j) > 0 ? sum(j) / cnt(j) : lo + (j + 0.5) * width;
    model.levels.push_back(level);
    model.marginal.push_back(cnt / N);
    model.collapsed.push_back(false);
  }
  for (int t = 0; t + 1 < T; ++t) {
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(model.bins(t), model.bins(t + 1));
    for (int i = 0; i < N; ++i) P(bin(i, t), bin(i, t + 1)) += 1.0;
    for (int j = 0; j < P.rows(); ++j) {
      const double s = P.row(j).sum();
      if (s > 0)
        P.row(j) /= s;
      else
        P.row(j) = model.marginal[t + 1].transpose();
    }
    model.transitions.push_back(P);
  }
  return model;
}

double propagation_tv(const MarkovPriceModel& model) {
  double worst = 0.0;
  for (int t = 0; t + 1 < model.periods(); ++t) {
    const Eigen::VectorXd pushed = model.transitions[t].transpose() * model.marginal[t];
    worst = std::max(worst, 0.5 * (pushed - model.marginal[t + 1]).cwiseAbs().sum());
  }
  return worst;
}

void write_scenarios_csv(const std::string& path, const PriceScenarioSet& set) {
  std::vector<std::string> header;
  for (int t = 0; t < set.periods(); ++t) header.push_back("t" + std::to_string(t));
  csv::write_matrix(path, set.scenarios, header);
}

Eigen::MatrixXd read_scenarios_csv(const std::string& path) { return csv::read_matrix(path); }

}  // namespace esb
