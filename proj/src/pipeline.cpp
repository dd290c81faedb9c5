#include "ive/pipeline.hpp"

#include <cmath>
#include <stdexcept>
#include <thread>

namespace ive::pipeline {

using features::FeatureWindow;

std::map<CurveKey, PredictedCurve> predict_curves(model::TrainableModel& model,
                                                  std::span<const FeatureWindow> windows, int threads) {
  // Step-1 forecasts per window, computed in parallel, merged in input order.
  std::vector<double> locs(windows.size());
  std::vector<double> stds(windows.size());
  const bool probabilistic = model.kind() == "ive";
  auto* forecaster = probabilistic ? dynamic_cast<model::Forecaster*>(&model) : nullptr;

  auto run_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      if (forecaster != nullptr) {
        const auto params = forecaster->forward(windows[i]);
        locs[i] = params[0].loc;
        stds[i] = params[0].stddev();
      } else {
        locs[i] = model.point_forecast(windows[i])[0];
        stds[i] = 0.0;
      }
    }
  };

  if (threads <= 1 || windows.size() < 2) {
    run_range(0, windows.size());
  } else {
    const int n_workers = std::min<std::size_t>(threads, windows.size());
    std::vector<std::thread> pool;
    const std::size_t chunk = (windows.size() + n_workers - 1) / n_workers;
    for (int w = 0; w < n_workers; ++w) {
      const std::size_t begin = w * chunk;
      const std::size_t end = std::min(windows.size(), begin + chunk);
      if (begin < end) pool.emplace_back(run_range, begin, end);
    }
    for (auto& t : pool) t.join();
  }

  struct Partial {
    std::vector<double> loc, stddev, actual;
    std::vector<bool> seen;
  };
  std::map<CurveKey, Partial> partials;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const FeatureWindow& w = windows[i];
    auto& p = partials[{w.symbol, w.first_target_date}];
    if (p.seen.empty()) {
      p.loc.assign(w.bars_per_day, 0.0);
      p.stddev.assign(w.bars_per_day, 0.0);
      p.actual.assign(w.bars_per_day, 0.0);
      p.seen.assign(w.bars_per_day, false);
    }
    const int m = w.first_target_minute;
    p.loc[m] = locs[i];
    p.stddev[m] = stds[i];
    p.actual[m] = w.target[0];
    p.seen[m] = true;
  }

  std::map<CurveKey, PredictedCurve> curves;
  for (auto& [key, p] : partials) {
    bool complete = true;
    for (bool s : p.seen) complete = complete && s;
    if (!complete) continue;  // partial coverage: first day of a stock or truncated tail
    const double t = static_cast<double>(p.loc.size());
    PredictedCurve curve;
    curve.loc = p.loc;
    curve.stddev = p.stddev;
    curve.actual_y = p.actual;
    curve.ratio.reserve(p.loc.size());
    curve.actual_ratio.reserve(p.loc.size());
    for (std::size_t m = 0; m < p.loc.size(); ++m) {
      curve.ratio.push_back(std::exp(p.loc[m]) / t);
      curve.actual_ratio.push_back(std::exp(p.actual[m]) / t);
    }
    curves[key] = std::move(curve);
  }
  return curves;
}

SpikeSeries collect_spike_series(const std::map<CurveKey, PredictedCurve>& curves, bool use_transformed) {
  SpikeSeries out;
  std::string prev_symbol;
  long prev_serial = -1000;
  for (const auto& [key, curve] : curves) {
    const bool contiguous = key.first == prev_symbol && key.second.serial() <= prev_serial + 4;
    for (std::size_t m = 0; m < curve.stddev.size(); ++m) {
      const double ratio = use_transformed ? curve.actual_y[m] : curve.actual_ratio[m];
      if (!out.pred_std.empty() && (contiguous || m > 0)) {
        out.d_std.push_back(curve.stddev[m] - out.pred_std.back());
        out.d_ratio.push_back(ratio - out.ratio.back());
      }
      out.pred_std.push_back(curve.stddev[m]);
      out.ratio.push_back(ratio);
    }
    prev_symbol = key.first;
    prev_serial = key.second.serial();
  }
  return out;
}

execsim::ExecutionPlan plan_from_curve(const std::string& symbol, const data::Date& date,
                                       const PredictedCurve& curve, execsim::Side side, const PlanOptions& options) {
  std::vector<double> ratios = curve.ratio;
  if (options.spike_adjust) {
    const std::vector<bool> gate = analysis::spike_gate(curve.stddev, options.gate_history);
    const double t = static_cast<double>(curve.loc.size());
    for (std::size_t m = 0; m < ratios.size(); ++m) {
      if (gate[m]) {
        const double adjusted_loc = curve.loc[m] + options.spike_c * curve.stddev[m];
        ratios[m] = std::exp(adjusted_loc) / t;
      }
    }
  }
  return execsim::make_plan(symbol, date, side, ratios, options.total_qty);
}

}  // namespace ive::pipeline
