#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "ive/analysis.hpp"
#include "ive/execsim.hpp"
#include "ive/features.hpp"
#include "ive/model.hpp"

namespace ive::pipeline {

// One-step-ahead rolling forecasts, one entry per minute of a day. ratio is
// the inverse-transformed location, exp(mu)/T; stddev is the distribution
// standard deviation (zero for point baselines).
struct PredictedCurve {
  std::vector<double> ratio;
  std::vector<double> stddev;
  std::vector<double> loc;          // transformed units
  std::vector<double> actual_y;     // realized transformed target
  std::vector<double> actual_ratio; // realized v_t / V_day
};

using CurveKey = std::pair<std::string, data::Date>;

// Runs the model over every window whose first target step falls on a fully
// covered day and groups the step-1 forecasts per (symbol, date). Only days
// with all minutes covered are returned; the first day of each stock has no
// context and is dropped.
std::map<CurveKey, PredictedCurve> predict_curves(model::TrainableModel& model,
                                                  std::span<const features::FeatureWindow> windows,
                                                  int threads = 1);

// Aligned per-minute (stddev, ratio) series for the spike regressions, with
// first differences taken within a (symbol, day-run) segment only.
struct SpikeSeries {
  std::vector<double> pred_std;
  std::vector<double> ratio;        // transformed or raw, per use_transformed
  std::vector<double> d_std;        // segment-aware first differences
  std::vector<double> d_ratio;
};

SpikeSeries collect_spike_series(const std::map<CurveKey, PredictedCurve>& curves, bool use_transformed);

// Spike-gated execution plans: greedy ratios, optionally adjusted by
// c * stddev on gated minutes before apportionment.
struct PlanOptions {
  long long total_qty = 10000;
  bool spike_adjust = false;
  double spike_c = 0.2;
  analysis::SpikeGateHistory gate_history;
};

execsim::ExecutionPlan plan_from_curve(const std::string& symbol, const data::Date& date,
                                       const PredictedCurve& curve, execsim::Side side, const PlanOptions& options);

}  // namespace ive::pipeline
