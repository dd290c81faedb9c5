#pragma once

#include <span>
#include <string>
#include <vector>

#include "ive/marketdata.hpp"

namespace ive::analysis {

struct OLSTerm {
  std::string name;
  double coefficient = 0.0;
  double std_error = 0.0;
  double t_stat = 0.0;
  double p_value = 0.0;
};

struct OLSResult {
  std::vector<OLSTerm> terms;  // intercept first when present
  double r_squared = 0.0;
  double f_stat = 0.0;
  int n = 0;
  int dof = 0;  // n - #columns
  bool intercept = false;

  std::string table() const;  // text table, one row per term
};

// Two-sided p-value from the t distribution via the regularized incomplete
// beta function; |t| > 40 underflows double precision and reports 0.
double student_t_p_value(double t, int dof);
double incomplete_beta(double a, double b, double x);

// Least squares of y on the given columns (Householder QR). Standard errors
// from sigma^2 (X'X)^-1; throws on rank deficiency naming the collinear
// column.
OLSResult ols(const std::vector<std::vector<double>>& columns, std::span<const double> y, bool intercept,
              const std::vector<std::string>& names = {});

// Volume ratio regressed on the predicted standard deviation (intercept
// included). Requires n > 10 and a non-degenerate regressor.
OLSResult spike_level_regression(std::span<const double> pred_std, std::span<const double> volume_ratio);

// First-differenced ratio regressed on first-differenced predicted std,
// restricted to steps where the ratio increased. Requires >= 10 such steps.
OLSResult spike_diff_regression(std::span<const double> pred_std, std::span<const double> volume_ratio);

// Same regression on pre-computed difference pairs (callers with several
// independent series concatenate per-series differences).
OLSResult spike_diff_regression_pairs(std::span<const double> d_std, std::span<const double> d_ratio);

// Gate threshold: median of historical std increases taken over steps where
// the volume ratio increased.
struct SpikeGateHistory {
  double median_positive_dstd = 0.0;
  bool valid = false;

  static SpikeGateHistory from_series(std::span<const double> hist_std, std::span<const double> hist_ratio);
  static SpikeGateHistory from_diffs(std::span<const double> d_std, std::span<const double> d_ratio);
};

// gate[t] = (std[t] - std[t-1]) > median; gate[0] is always false, and an
// invalid history gates nothing.
std::vector<bool> spike_gate(std::span<const double> pred_std, const SpikeGateHistory& history);

// Per (stock, date) session descriptors for the performance attribution
// regression.
struct MarketFeatures {
  std::string symbol;
  data::Date date;
  double close_over_open = 0.0;   // x1
  double high_over_low = 0.0;     // x2
  double bar_range_mean = 0.0;    // x3: mean per-bar high/low
  double bar_range_std = 0.0;     // x4: std per-bar high/low
  double log_turnover = 0.0;      // x5: ln(volume / shares outstanding)
};

MarketFeatures compute_market_features(const data::TradingDay& day, const data::StockMeta& meta);

// Z-scores x1..x5 column-wise, then OLS with intercept against performance
// in basis points. Requires n >= 30.
OLSResult performance_regression(std::span<const MarketFeatures> features, std::span<const double> perf_bp);

double median(std::vector<double> values);

}  // namespace ive::analysis
