#pragma once

#include "esbound/adjust.hpp"
#include "esbound/ced.hpp"
#include "esbound/core_model.hpp"
#include "esbound/sdp.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace esb {

enum class Toggle { original, adjusted, capped };
std::string to_string(Toggle t);
Toggle toggle_from_string(const std::string& s);
// "original", "adjusted", "capped" or "both" (all three); comma lists allowed.
std::vector<Toggle> parse_toggles(const std::string& list);

struct PriceModelConfig {
  double baseline_sigma = 20.0;  // $/MWh
  int n_bins = 20;
  int soc_points = 101;
  int scenarios = 400;
  double ar1 = 0.0;
  int n_segments = 10;
};

struct ExperimentPlan {
  int da_scenarios = 1;
  int rt_per_da = 1;
  std::uint64_t seed = 1;
  std::vector<double> epsilons{0.1};
  std::vector<double> sigma_scales{1.0};
  std::vector<double> withholding{1.0};
  std::vector<Toggle> toggles{Toggle::original, Toggle::adjusted, Toggle::capped};
  int decay_lookahead = 6;
  double voll = 10000.0;
  double da_forecast_noise = 0.5;  // DA forecast error, fraction of sigma
  double delta = 0.01;
  int workers = 1;
  std::string label = "default";
};

struct RunMetrics {
  int da_id = 0;
  int rt_id = 0;
  Toggle toggle = Toggle::original;
  double sigma_scale = 1.0;
  double eps = 0.1;
  double withholding = 1.0;
  double system_cost = 0.0;
  std::vector<double> profit;  // per storage
  double profit_total = 0.0;
  double hindsight_cost = 0.0;
  double gap = 0.0;
  double response_mwh = 0.0;       // all periods
  double response_peak_mwh = 0.0;  // top-quartile day-ahead price periods
  double coverage = 0.0;           // fraction of storages with max hindsight theta <= DA ceiling
  double mean_bound = 0.0;         // mean DA ceiling over storages
  double shed_mwh = 0.0;
  int adjust_flags = 0;  // bisection steps where even m = 0 broke the bound
  bool flagged = false;  // load was shed in some period
};

struct CellFailure {
  int da_id = 0;
  int rt_id = 0;
  std::string message;
};

struct ExperimentResult {
  std::vector<RunMetrics> rows;
  std::vector<CellFailure> failures;
  int cells_total = 0;
  int cells_done = 0;
  double completion() const { return cells_total ? double(cells_done) / cells_total : 1.0; }
};

struct ClearingOptions {
  double voll = 10000.0;
  double spill_penalty = 0.0;  // 0: surplus energy is disposed of freely
  double tie_break = 1e-3;     // $/MWh handicap on storage segments
};

struct ClearingState {
  std::optional<Eigen::VectorXd> g_prev;
  Eigen::VectorXd e;  // per storage SoC before the period
};

struct ClearingResult {
  Eigen::VectorXd g, r, inj, shed;
  double spill = 0.0;
  Eigen::VectorXd p, b, e_next;  // per storage
  Eigen::VectorXd lmp;           // per node
  double lambda = 0.0;
  double generation_cost = 0.0;
  double storage_cost = 0.0;     // M * p
  double congestion_rent = 0.0;
  bool shed_flag = false;
};

ClearingResult clear_rt_market(const PowerSystem& system, const Eigen::VectorXd& netload_t,
                               const std::vector<BidCurve>& bids, const ClearingState& state,
                               const ClearingOptions& options = {});

using CellCallback = std::function<void(int da, int rt, const std::vector<RunMetrics>& rows,
                                        const std::optional<CellFailure>& failure)>;

// Runs every (da, rt) cell not listed in `skip`. Rows are canonically sorted.
ExperimentResult run_experiment(const PowerSystem& system, const NetloadModel& netload,
                                const PriceModelConfig& price, const ExperimentPlan& plan,
                                const std::set<std::pair<int, int>>& skip = {},
                                const CellCallback& on_cell = {});

void sort_canonical(std::vector<RunMetrics>& rows);

struct SummaryRow {
  std::string label;
  double sigma_scale = 0.0;
  double eps = 0.0;
  double withholding = 0.0;
  Toggle toggle = Toggle::original;
  int n = 0;
  double mean_cost = 0.0;
  double mean_profit = 0.0;
  double cost_reduction_mean_pct = 0.0;  // against original, paired
  double cost_reduction_max_pct = 0.0;
  double profit_increase_pct = 0.0;
  double gap_pct = 0.0;
  double gap_original_pct = 0.0;
  double response_peak_mwh = 0.0;
  double response_increase_pct = 0.0;
  double coverage = 0.0;
  double mean_bound = 0.0;
};

struct Summary {
  std::vector<SummaryRow> rows;
  std::vector<std::string> notes;
};

Summary summarize(const std::vector<RunMetrics>& rows, const std::string& label = "default");

void write_results_csv(const std::string& path, const PowerSystem& system,
                       const std::vector<RunMetrics>& rows);
std::vector<RunMetrics> read_results_csv(const std::string& path, int storage_count);
void write_summary_csv(const std::string& path, const Summary& summary);

// Paired one-sided sign test: P(X >= wins) for X ~ Bin(wins + losses, 1/2).
double sign_test_p(int wins, int losses);

}  // namespace esb
