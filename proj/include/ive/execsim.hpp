#pragma once

#include <span>
#include <string>
#include <vector>

#include "ive/marketdata.hpp"

namespace ive::execsim {

enum class Side { BUY, SELL };

std::string side_str(Side s);
Side parse_side(std::string_view s);

struct ExecutionPlan {
  std::string symbol;
  data::Date date;
  Side side = Side::BUY;
  long long total_qty = 0;
  std::vector<long long> per_minute_qty;  // one per bar, sums to total_qty
};

// Largest-remainder apportionment of total_qty proportional to the ratios;
// leftover units go to the largest fractional remainders, earlier minutes
// winning ties.
std::vector<long long> allocate_quantity(std::span<const double> ratios, long long total_qty);

ExecutionPlan make_plan(std::string symbol, data::Date date, Side side, std::span<const double> ratios,
                        long long total_qty);

struct FillModelConfig {
  double participation_cap = 0.1;   // fraction of a bar's volume fillable per minute
  double market_slippage_bp = 2.0;  // applied against the trader on market fills
  double tick = 0.01;

  void validate() const;
};

struct Fill {
  int minute = 0;
  long long qty = 0;
  double price = 0.0;
  bool sweep = false;  // market-order fill at one of the two cancel waves
};

struct SimResult {
  std::string symbol;
  data::Date date;
  Side side = Side::BUY;
  long long total_qty = 0;
  long long filled_qty = 0;
  double avg_exec_price = 0.0;
  double vwap = 0.0;
  double perf_bp = 0.0;   // positive = better than VWAP
  bool perf_defined = false;
  bool used_first_sweep = false;
  bool used_final_sweep = false;
  bool final_sweep_exceeded_cap = false;  // plan infeasible under the cap; market-order assumption kicked in
  bool vi_day = false;
  std::vector<Fill> fills;
};

// Algorithm: per-minute limit orders at the bar's best bid/ask proxy
// (open -/+ half tick) until 30 minutes before close, a capped market sweep
// at T-30, and an unconditional market sweep at T-10. Sessions too short for
// a wave skip it; the residue of a session shorter than the final wave is
// forced at the last bar so completion always holds.
SimResult simulate_day(const data::TradingDay& day, const ExecutionPlan& plan, const FillModelConfig& config);

// BUY: (vwap - exec) / vwap * 1e4;  SELL: (exec - vwap) / vwap * 1e4.
double perf_bp(double avg_exec, double vwap, Side side);

struct DistStats {
  int n = 0;
  double mean_bp = 0.0;
  double median_bp = 0.0;
  double std_bp = 0.0;
  double beat_ratio = 0.0;     // fraction with perf_bp > 0
  double top20_mean = 0.0;     // mean of the ceil(0.2 n) best
  double bottom20_mean = 0.0;  // mean of the ceil(0.2 n) worst
};

struct Summary {
  DistStats all;
  DistStats buy;
  DistStats sell;
  int n_undefined = 0;  // results with no defined performance (zero quantity)
};

Summary aggregate_stats(std::span<const SimResult> results);

struct ViStressReport {
  Summary vi;
  Summary non_vi;
  int vi_days = 0;
  int non_vi_days = 0;
};

ViStressReport vi_stress_split(std::span<const SimResult> results);

// Simulates every (day, plan) pair and reports VI and non-VI partitions side
// by side.
ViStressReport vi_stress(std::span<const data::TradingDay> days, std::span<const ExecutionPlan> plans,
                         const FillModelConfig& config);

// Ledger row: symbol,date,side,qty,avg_exec,vwap,perf_bp,vi_flag
std::string ledger_header();
std::string ledger_row(const SimResult& r);
void write_ledger(const std::string& path, std::span<const SimResult> results);

}  // namespace ive::execsim
