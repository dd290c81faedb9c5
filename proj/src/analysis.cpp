#include "ive/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace ive::analysis {

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// ---------------------------------------------------------------------------
// t-distribution tail probability
// ---------------------------------------------------------------------------

namespace {

// Continued fraction for the incomplete beta function (Lentz's method).
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  return h;  // converged to working precision for all realistic inputs
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (x < 0.0 || x > 1.0) throw std::invalid_argument("incomplete_beta: x outside [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double ln_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log(1.0 - x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * betacf(a, b, x) / a;
  }
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double student_t_p_value(double t, int dof) {
  if (dof <= 0) throw std::invalid_argument("student_t_p_value: dof must be positive");
  const double at = std::abs(t);
  if (at > 40.0) return 0.0;  // beyond double-precision tail resolution
  const double x = dof / (dof + at * at);
  return incomplete_beta(dof / 2.0, 0.5, x);
}

// ---------------------------------------------------------------------------
// OLS via Householder QR
// ---------------------------------------------------------------------------

OLSResult ols(const std::vector<std::vector<double>>& columns, std::span<const double> y, bool intercept,
              const std::vector<std::string>& names) {
  const int n = static_cast<int>(y.size());
  const int k = static_cast<int>(columns.size());
  const int p = k + (intercept ? 1 : 0);
  if (k == 0) throw std::invalid_argument("ols: no regressors");
  for (const auto& col : columns)
    if (static_cast<int>(col.size()) != n) throw std::invalid_argument("ols: column length mismatch");
  if (n <= p) throw std::invalid_argument("ols: need n > number of coefficients");
  if (!names.empty() && static_cast<int>(names.size()) != k)
    throw std::invalid_argument("ols: names/columns mismatch");

  auto col_name = [&](int j) -> std::string {
    // j indexes the design matrix; 0 is the intercept when present.
    if (intercept && j == 0) return "const";
    const int reg = intercept ? j - 1 : j;
    return names.empty() ? "x" + std::to_string(reg + 1) : names[reg];
  };

  // Design matrix, row-major n x p.
  std::vector<double> a(static_cast<std::size_t>(n) * p);
  for (int i = 0; i < n; ++i) {
    if (intercept) a[static_cast<std::size_t>(i) * p] = 1.0;
    for (int j = 0; j < k; ++j) a[static_cast<std::size_t>(i) * p + (intercept ? j + 1 : j)] = columns[j][i];
  }
  std::vector<double> qty(y.begin(), y.end());

  // Householder triangularization, applying reflections to y as we go.
  for (int j = 0; j < p; ++j) {
    double norm = 0.0;
    for (int i = j; i < n; ++i) norm += a[static_cast<std::size_t>(i) * p + j] * a[static_cast<std::size_t>(i) * p + j];
    norm = std::sqrt(norm);
    if (norm < 1e-12) throw std::runtime_error("ols: column '" + col_name(j) + "' is collinear (rank deficient)");
    const double ajj = a[static_cast<std::size_t>(j) * p + j];
    const double alpha = ajj >= 0.0 ? -norm : norm;
    std::vector<double> v(n - j);
    v[0] = ajj - alpha;
    for (int i = j + 1; i < n; ++i) v[i - j] = a[static_cast<std::size_t>(i) * p + j];
    double vtv = 0.0;
    for (double vi : v) vtv += vi * vi;
    if (vtv < 1e-300) throw std::runtime_error("ols: column '" + col_name(j) + "' is collinear (rank deficient)");

    for (int c = j; c < p; ++c) {
      double dot = 0.0;
      for (int i = j; i < n; ++i) dot += v[i - j] * a[static_cast<std::size_t>(i) * p + c];
      const double f = 2.0 * dot / vtv;
      for (int i = j; i < n; ++i) a[static_cast<std::size_t>(i) * p + c] -= f * v[i - j];
    }
    double dot = 0.0;
    for (int i = j; i < n; ++i) dot += v[i - j] * qty[i];
    const double f = 2.0 * dot / vtv;
    for (int i = j; i < n; ++i) qty[i] -= f * v[i - j];

    if (std::abs(a[static_cast<std::size_t>(j) * p + j]) < 1e-10 * std::max(1.0, norm))
      throw std::runtime_error("ols: column '" + col_name(j) + "' is collinear (rank deficient)");
  }

  // Back-substitution: R beta = Q'y.
  std::vector<double> beta(p);
  for (int j = p - 1; j >= 0; --j) {
    double acc = qty[j];
    for (int c = j + 1; c < p; ++c) acc -= a[static_cast<std::size_t>(j) * p + c] * beta[c];
    beta[j] = acc / a[static_cast<std::size_t>(j) * p + j];
  }

  // Residuals against the original data.
  double ssr = 0.0;
  double y_mean = 0.0;
  for (int i = 0; i < n; ++i) y_mean += y[i];
  y_mean /= n;
  double sst = 0.0;
  double sst_raw = 0.0;
  for (int i = 0; i < n; ++i) {
    double fit = intercept ? beta[0] : 0.0;
    for (int j = 0; j < k; ++j) fit += beta[intercept ? j + 1 : j] * columns[j][i];
    const double r = y[i] - fit;
    ssr += r * r;
    sst += (y[i] - y_mean) * (y[i] - y_mean);
    sst_raw += y[i] * y[i];
  }

  const int dof = n - p;
  const double sigma2 = ssr / dof;

  // (X'X)^-1 = R^-1 R^-T from the stored R.
  std::vector<double> rinv(static_cast<std::size_t>(p) * p, 0.0);
  for (int j = 0; j < p; ++j) {
    rinv[static_cast<std::size_t>(j) * p + j] = 1.0 / a[static_cast<std::size_t>(j) * p + j];
    for (int i = j - 1; i >= 0; --i) {
      double acc = 0.0;
      for (int c = i + 1; c <= j; ++c) acc += a[static_cast<std::size_t>(i) * p + c] * rinv[static_cast<std::size_t>(c) * p + j];
      rinv[static_cast<std::size_t>(i) * p + j] = -acc / a[static_cast<std::size_t>(i) * p + i];
    }
  }

  OLSResult result;
  result.n = n;
  result.dof = dof;
  result.intercept = intercept;
  for (int j = 0; j < p; ++j) {
    double diag = 0.0;
    for (int c = j; c < p; ++c) diag += rinv[static_cast<std::size_t>(j) * p + c] * rinv[static_cast<std::size_t>(j) * p + c];
    OLSTerm term;
    term.name = col_name(j);
    term.coefficient = beta[j];
    term.std_error = std::sqrt(sigma2 * diag);
    term.t_stat = term.coefficient / term.std_error;
    term.p_value = student_t_p_value(term.t_stat, dof);
    result.terms.push_back(std::move(term));
  }

  const double tss = intercept ? sst : sst_raw;
  result.r_squared = tss > 0.0 ? 1.0 - ssr / tss : 1.0;
  const double explained = tss - ssr;
  const int num_dof = intercept ? k : p;
  if (ssr > 0.0 && num_dof > 0) {
    result.f_stat = (explained / num_dof) / (ssr / dof);
  } else {
    result.f_stat = std::numeric_limits<double>::infinity();
  }
  return result;
}

std::string OLSResult::table() const {
  std::string out = "variable        coefficient     std_error       t_stat          p_value\n";
  char buf[160];
  for (const auto& t : terms) {
    std::snprintf(buf, sizeof(buf), "%-15s %-15.6g %-15.6g %-15.6g %-15.6g\n", t.name.c_str(), t.coefficient,
                  t.std_error, t.t_stat, t.p_value);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "n=%d dof=%d r_squared=%.6g f_stat=%.6g\n", n, dof, r_squared, f_stat);
  out += buf;
  return out;
}

// ---------------------------------------------------------------------------
// Spike analyses
// ---------------------------------------------------------------------------

namespace {

double variance(std::span<const double> v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return var / static_cast<double>(v.size());
}

}  // namespace

OLSResult spike_level_regression(std::span<const double> pred_std, std::span<const double> volume_ratio) {
  if (pred_std.size() != volume_ratio.size()) throw std::invalid_argument("spike_level_regression: length mismatch");
  if (pred_std.size() <= 10) throw std::invalid_argument("spike_level_regression: need n > 10");
  if (variance(pred_std) <= 0.0) throw std::runtime_error("spike_level_regression: predicted std has zero variance");
  std::vector<std::vector<double>> cols{std::vector<double>(pred_std.begin(), pred_std.end())};
  return ols(cols, volume_ratio, true, {"pred_std"});
}

OLSResult spike_diff_regression_pairs(std::span<const double> d_std, std::span<const double> d_ratio) {
  if (d_std.size() != d_ratio.size()) throw std::invalid_argument("spike_diff_regression: length mismatch");
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < d_ratio.size(); ++i) {
    if (d_ratio[i] > 0.0) {
      xs.push_back(d_std[i]);
      ys.push_back(d_ratio[i]);
    }
  }
  if (xs.size() < 10)
    throw std::runtime_error("spike_diff_regression: only " + std::to_string(xs.size()) +
                             " positive ratio increases (need >= 10)");
  if (variance(xs) <= 0.0) throw std::runtime_error("spike_diff_regression: differenced std has zero variance");
  return ols({xs}, ys, true, {"d_pred_std"});
}

OLSResult spike_diff_regression(std::span<const double> pred_std, std::span<const double> volume_ratio) {
  if (pred_std.size() != volume_ratio.size()) throw std::invalid_argument("spike_diff_regression: length mismatch");
  if (pred_std.size() < 3) throw std::invalid_argument("spike_diff_regression: need at least 3 points");
  std::vector<double> d_std, d_ratio;
  for (std::size_t i = 1; i < pred_std.size(); ++i) {
    d_std.push_back(pred_std[i] - pred_std[i - 1]);
    d_ratio.push_back(volume_ratio[i] - volume_ratio[i - 1]);
  }
  return spike_diff_regression_pairs(d_std, d_ratio);
}

SpikeGateHistory SpikeGateHistory::from_diffs(std::span<const double> d_std, std::span<const double> d_ratio) {
  if (d_std.size() != d_ratio.size()) throw std::invalid_argument("spike gate history: length mismatch");
  std::vector<double> kept;
  for (std::size_t i = 0; i < d_ratio.size(); ++i)
    if (d_ratio[i] > 0.0) kept.push_back(d_std[i]);
  SpikeGateHistory h;
  if (!kept.empty()) {
    h.median_positive_dstd = median(std::move(kept));
    h.valid = true;
  }
  return h;
}

SpikeGateHistory SpikeGateHistory::from_series(std::span<const double> hist_std, std::span<const double> hist_ratio) {
  if (hist_std.size() != hist_ratio.size()) throw std::invalid_argument("spike gate history: length mismatch");
  if (hist_std.empty()) throw std::invalid_argument("spike gate history: empty history");
  std::vector<double> d_std, d_ratio;
  for (std::size_t i = 1; i < hist_std.size(); ++i) {
    d_std.push_back(hist_std[i] - hist_std[i - 1]);
    d_ratio.push_back(hist_ratio[i] - hist_ratio[i - 1]);
  }
  return from_diffs(d_std, d_ratio);
}

std::vector<bool> spike_gate(std::span<const double> pred_std, const SpikeGateHistory& history) {
  std::vector<bool> gate(pred_std.size(), false);
  if (!history.valid) return gate;
  for (std::size_t i = 1; i < pred_std.size(); ++i)
    gate[i] = (pred_std[i] - pred_std[i - 1]) > history.median_positive_dstd;
  return gate;
}

// ---------------------------------------------------------------------------
// Performance attribution
// ---------------------------------------------------------------------------

MarketFeatures compute_market_features(const data::TradingDay& day, const data::StockMeta& meta) {
  if (day.total_volume <= 0)
    throw std::runtime_error("market features: " + day.symbol + " " + day.date.str() + " has zero volume");
  MarketFeatures f;
  f.symbol = day.symbol;
  f.date = day.date;
  const double open = day.bars.front().open;
  const double close = day.bars.back().close;
  double high = day.bars.front().high;
  double low = day.bars.front().low;
  std::vector<double> bar_ranges;
  for (const auto& b : day.bars) {
    high = std::max(high, b.high);
    low = std::min(low, b.low);
    if (b.volume > 0) bar_ranges.push_back(b.high / b.low);  // zero-volume bars are gap fills
  }
  f.close_over_open = close / open;
  f.high_over_low = high / low;
  if (!bar_ranges.empty()) {
    double mean = 0.0;
    for (double r : bar_ranges) mean += r;
    mean /= static_cast<double>(bar_ranges.size());
    double var = 0.0;
    for (double r : bar_ranges) var += (r - mean) * (r - mean);
    f.bar_range_mean = mean;
    f.bar_range_std = std::sqrt(var / static_cast<double>(bar_ranges.size()));
  } else {
    f.bar_range_mean = 1.0;
    f.bar_range_std = 0.0;
  }
  f.log_turnover = std::log(static_cast<double>(day.total_volume) / static_cast<double>(meta.shares_outstanding));
  return f;
}

OLSResult performance_regression(std::span<const MarketFeatures> features, std::span<const double> perf_bp) {
  if (features.size() != perf_bp.size()) throw std::invalid_argument("performance_regression: length mismatch");
  if (features.size() < 30) throw std::invalid_argument("performance_regression: need n >= 30");
  auto column = [&](auto getter) {
    std::vector<double> raw;
    raw.reserve(features.size());
    for (const auto& f : features) raw.push_back(getter(f));
    double mean = 0.0;
    for (double v : raw) mean += v;
    mean /= static_cast<double>(raw.size());
    double var = 0.0;
    for (double v : raw) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(raw.size()));
    for (double& v : raw) v = sd > 0.0 ? (v - mean) / sd : 0.0;
    return raw;
  };
  std::vector<std::vector<double>> cols;
  cols.push_back(column([](const MarketFeatures& f) { return f.close_over_open; }));
  cols.push_back(column([](const MarketFeatures& f) { return f.high_over_low; }));
  cols.push_back(column([](const MarketFeatures& f) { return f.bar_range_mean; }));
  cols.push_back(column([](const MarketFeatures& f) { return f.bar_range_std; }));
  cols.push_back(column([](const MarketFeatures& f) { return f.log_turnover; }));
  return ols(cols, perf_bp, true, {"x1", "x2", "x3", "x4", "x5"});
}

}  // namespace ive::analysis
