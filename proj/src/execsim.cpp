#include "ive/execsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace ive::execsim {

std::string side_str(Side s) { return s == Side::BUY ? "BUY" : "SELL"; }

Side parse_side(std::string_view s) {
  if (s == "BUY" || s == "buy") return Side::BUY;
  if (s == "SELL" || s == "sell") return Side::SELL;
  throw std::runtime_error("bad side '" + std::string(s) + "'");
}

std::vector<long long> allocate_quantity(std::span<const double> ratios, long long total_qty) {
  if (ratios.empty()) throw std::invalid_argument("allocate_quantity: empty ratios");
  if (total_qty <= 0) throw std::invalid_argument("allocate_quantity: total_qty must be positive");
  double total_ratio = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0) || !std::isfinite(r)) throw std::invalid_argument("allocate_quantity: ratios must be positive");
    total_ratio += r;
  }

  const std::size_t n = ratios.size();
  std::vector<long long> qty(n);
  std::vector<std::pair<double, std::size_t>> remainders(n);
  long long assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double exact = static_cast<double>(total_qty) * ratios[i] / total_ratio;
    qty[i] = static_cast<long long>(std::floor(exact));
    remainders[i] = {exact - std::floor(exact), i};
    assigned += qty[i];
  }
  long long leftover = total_qty - assigned;
  // Descending remainder, earlier minute on ties.
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (long long i = 0; i < leftover; ++i) qty[remainders[static_cast<std::size_t>(i) % n].second] += 1;
  // Floating-point rounding can in principle over-assign; take the surplus
  // back from the smallest remainders so the sum is exact unconditionally.
  for (std::size_t i = n; leftover < 0; --i) {
    auto& q = qty[remainders[(i - 1) % n].second];
    if (q > 0) {
      q -= 1;
      ++leftover;
    }
    if (i == 1) i = n + 1;
  }
  return qty;
}

ExecutionPlan make_plan(std::string symbol, data::Date date, Side side, std::span<const double> ratios,
                        long long total_qty) {
  ExecutionPlan plan;
  plan.symbol = std::move(symbol);
  plan.date = date;
  plan.side = side;
  plan.total_qty = total_qty;
  plan.per_minute_qty = allocate_quantity(ratios, total_qty);
  return plan;
}

void FillModelConfig::validate() const {
  if (!(participation_cap > 0.0) || participation_cap > 1.0)
    throw std::invalid_argument("fill config: participation_cap must be in (0, 1]");
  if (market_slippage_bp < 0.0) throw std::invalid_argument("fill config: slippage must be >= 0");
  if (tick <= 0.0) throw std::invalid_argument("fill config: tick must be positive");
}

double perf_bp(double avg_exec, double vwap, Side side) {
  if (!(avg_exec > 0.0) || !(vwap > 0.0)) throw std::invalid_argument("perf_bp: prices must be positive");
  const double edge = side == Side::BUY ? vwap - avg_exec : avg_exec - vwap;
  return edge / vwap * 1e4;
}

SimResult simulate_day(const data::TradingDay& day, const ExecutionPlan& plan, const FillModelConfig& config) {
  config.validate();
  const int t = day.bars_per_day();
  if (static_cast<int>(plan.per_minute_qty.size()) != t)
    throw std::invalid_argument("simulate_day: plan has " + std::to_string(plan.per_minute_qty.size()) +
                                " minutes for a " + std::to_string(t) + "-bar day");
  long long plan_sum = 0;
  for (long long q : plan.per_minute_qty) {
    if (q < 0) throw std::invalid_argument("simulate_day: negative per-minute quantity");
    plan_sum += q;
  }
  if (plan_sum != plan.total_qty) throw std::invalid_argument("simulate_day: per-minute quantities do not sum to total");

  SimResult result;
  result.symbol = plan.symbol;
  result.date = plan.date;
  result.side = plan.side;
  result.total_qty = plan.total_qty;
  result.vi_day = data::detect_vi(day);

  const bool buy = plan.side == Side::BUY;
  const double slip = config.market_slippage_bp * 1e-4;

  // Cancel-wave minutes; waves that fall before the session start do not
  // exist. Sessions of 10 bars or fewer force the residue at the last bar.
  const int first_wave = t - 30;
  const int final_wave = t - 10;
  const bool has_first_wave = first_wave >= 1;
  const bool has_final_wave = final_wave >= 1;
  const int limit_end = has_first_wave ? first_wave : (has_final_wave ? final_wave : t);

  long long filled = 0;
  double notional = 0.0;
  auto record_fill = [&](int minute, long long qty, double price, bool sweep) {
    if (qty <= 0) return;
    result.fills.push_back(Fill{minute, qty, price, sweep});
    filled += qty;
    notional += price * static_cast<double>(qty);
  };
  auto sweep_price = [&](const data::MinuteBar& bar) {
    const double px = data::typical_price(bar);
    return buy ? px * (1.0 + slip) : px * (1.0 - slip);
  };

  long long pending = 0;
  for (int m = 0; m < limit_end; ++m) {
    const data::MinuteBar& bar = day.bars[m];
    const long long order_qty = pending + plan.per_minute_qty[m];
    if (order_qty <= 0) {
      pending = 0;
      continue;
    }
    const double limit = buy ? bar.open - config.tick / 2.0 : bar.open + config.tick / 2.0;
    const bool crossed = buy ? bar.low < limit : bar.high > limit;
    long long fill_qty = 0;
    if (crossed) {
      const long long cap = static_cast<long long>(std::floor(config.participation_cap * static_cast<double>(bar.volume)));
      fill_qty = std::min(order_qty, cap);
      record_fill(m, fill_qty, limit, false);
    }
    pending = order_qty - fill_qty;
  }

  if (has_first_wave && first_wave < t) {
    // Cancel everything, market order for the full residue, capped by the
    // bar's participation limit.
    const data::MinuteBar& bar = day.bars[first_wave];
    const long long residue = plan.total_qty - filled;
    if (residue > 0) {
      const long long cap = static_cast<long long>(std::floor(config.participation_cap * static_cast<double>(bar.volume)));
      const long long qty = std::min(residue, cap);
      if (qty > 0) {
        record_fill(first_wave, qty, sweep_price(bar), true);
        result.used_first_sweep = true;
      }
    }
  }

  {
    // Final wave: fills unconditionally (market-order assumption).
    const int m = has_final_wave ? final_wave : t - 1;
    const data::MinuteBar& bar = day.bars[m];
    const long long residue = plan.total_qty - filled;
    if (residue > 0) {
      const long long cap = static_cast<long long>(std::floor(config.participation_cap * static_cast<double>(bar.volume)));
      if (residue > cap) result.final_sweep_exceeded_cap = true;
      record_fill(m, residue, sweep_price(bar), true);
      result.used_final_sweep = true;
    }
  }

  result.filled_qty = filled;
  if (filled > 0 && day.total_volume > 0) {
    result.avg_exec_price = notional / static_cast<double>(filled);
    result.vwap = data::day_vwap(day);
    result.perf_bp = perf_bp(result.avg_exec_price, result.vwap, plan.side);
    result.perf_defined = true;
  }
  return result;
}

namespace {

DistStats dist_stats(std::vector<double> values) {
  DistStats s;
  s.n = static_cast<int>(values.size());
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  int beats = 0;
  for (double v : values) {
    mean += v;
    if (v > 0.0) ++beats;
  }
  mean /= n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  s.mean_bp = mean;
  s.std_bp = std::sqrt(var / n);
  s.beat_ratio = static_cast<double>(beats) / n;

  std::sort(values.begin(), values.end());
  const std::size_t count = values.size();
  s.median_bp = count % 2 == 1 ? values[count / 2] : 0.5 * (values[count / 2 - 1] + values[count / 2]);
  const std::size_t k = static_cast<std::size_t>(std::ceil(0.2 * n));
  double top = 0.0, bottom = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    bottom += values[i];
    top += values[count - 1 - i];
  }
  s.top20_mean = top / static_cast<double>(k);
  s.bottom20_mean = bottom / static_cast<double>(k);
  return s;
}

}  // namespace

Summary aggregate_stats(std::span<const SimResult> results) {
  if (results.empty()) throw std::invalid_argument("aggregate_stats: no results");
  Summary summary;
  std::vector<double> all, buy, sell;
  for (const auto& r : results) {
    if (!r.perf_defined) {
      ++summary.n_undefined;
      continue;
    }
    all.push_back(r.perf_bp);
    (r.side == Side::BUY ? buy : sell).push_back(r.perf_bp);
  }
  summary.all = dist_stats(std::move(all));
  summary.buy = dist_stats(std::move(buy));
  summary.sell = dist_stats(std::move(sell));
  return summary;
}

ViStressReport vi_stress_split(std::span<const SimResult> results) {
  if (results.empty()) throw std::invalid_argument("vi_stress: no results");
  std::vector<SimResult> vi, non_vi;
  for (const auto& r : results) (r.vi_day ? vi : non_vi).push_back(r);
  ViStressReport report;
  report.vi_days = static_cast<int>(vi.size());
  report.non_vi_days = static_cast<int>(non_vi.size());
  if (!vi.empty()) report.vi = aggregate_stats(vi);
  if (!non_vi.empty()) report.non_vi = aggregate_stats(non_vi);
  return report;
}

ViStressReport vi_stress(std::span<const data::TradingDay> days, std::span<const ExecutionPlan> plans,
                         const FillModelConfig& config) {
  if (days.size() != plans.size()) throw std::invalid_argument("vi_stress: days/plans length mismatch");
  std::vector<SimResult> results;
  results.reserve(days.size());
  for (std::size_t i = 0; i < days.size(); ++i) results.push_back(simulate_day(days[i], plans[i], config));
  return vi_stress_split(results);
}

std::string ledger_header() { return "symbol,date,side,qty,avg_exec,vwap,perf_bp,vi_flag"; }

std::string ledger_row(const SimResult& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%s,%s,%lld,%.17g,%.17g,%.17g,%d", r.symbol.c_str(), r.date.str().c_str(),
                side_str(r.side).c_str(), r.filled_qty, r.avg_exec_price, r.vwap, r.perf_bp, r.vi_day ? 1 : 0);
  return buf;
}

void write_ledger(const std::string& path, std::span<const SimResult> results) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write ledger '" + path + "'");
  out << ledger_header() << "\n";
  for (const auto& r : results) out << ledger_row(r) << "\n";
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace ive::execsim
