#include "ive/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace ive::features {

RatioSeries ratio_transform(const data::TradingDay& day) {
  if (day.total_volume <= 0)
    throw std::runtime_error("ratio_transform: " + day.symbol + " " + day.date.str() + " has zero total volume");
  const double total = static_cast<double>(day.total_volume);
  const double t = static_cast<double>(day.bars_per_day());
  RatioSeries out;
  out.symbol = day.symbol;
  out.date = day.date;
  out.y.reserve(day.bars.size());
  for (const data::MinuteBar& b : day.bars) {
    const double v = std::max(static_cast<double>(b.volume), kRatioEps * total);
    out.y.push_back(std::log(t * v / total));
  }
  return out;
}

ZScoreResult zscore(std::span<const double> series) {
  if (series.empty()) throw std::invalid_argument("zscore: empty series");
  ZScoreResult r;
  const double n = static_cast<double>(series.size());
  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : series) var += (v - mean) * (v - mean);
  var /= n;  // population variance
  r.mean = mean;
  r.stddev = std::sqrt(var);
  r.values.reserve(series.size());
  for (double v : series) r.values.push_back(r.stddev > 0.0 ? (v - mean) / r.stddev : 0.0);
  return r;
}

std::array<double, kTimeDims> time_encoding(int minute_index, int bars_per_day, const data::Date& date) {
  if (minute_index < 0 || bars_per_day <= 0)
    throw std::invalid_argument("time_encoding: bad minute index or session length");
  std::array<double, kTimeDims> enc{};
  const double frac = static_cast<double>(minute_index) / static_cast<double>(bars_per_day);
  const double angle = 2.0 * M_PI * (frac - std::floor(frac));
  enc[0] = frac;
  enc[1] = std::sin(angle);
  enc[2] = std::cos(angle);
  const int dow = date.weekday();
  if (dow < 5) enc[3 + dow] = 1.0;  // weekend dates leave the one-hot at zero
  return enc;
}

void FeatureWindow::check() const {
  const std::size_t ctx_expected = static_cast<std::size_t>(context_len) * kFeatureDim;
  if (context.size() != ctx_expected || target.size() != static_cast<std::size_t>(horizon) ||
      time_enc_future.size() != static_cast<std::size_t>(horizon) * kTimeDims)
    throw std::logic_error("feature window: inconsistent dimensions");
  auto finite = [](double v) { return std::isfinite(v); };
  for (double v : context)
    if (!finite(v)) throw std::logic_error("feature window: non-finite context value");
  for (double v : target)
    if (!finite(v)) throw std::logic_error("feature window: non-finite target");
  for (double v : time_enc_future)
    if (!finite(v)) throw std::logic_error("feature window: non-finite time encoding");

  // Accumulated volume fraction: in [0,1], nondecreasing within a day segment.
  double prev = -1.0;
  double prev_day_frac = 2.0;
  for (int r = 0; r < context_len; ++r) {
    const double acc = context[static_cast<std::size_t>(r) * kFeatureDim + kColAccVol];
    const double day_frac = context[static_cast<std::size_t>(r) * kFeatureDim + kVolumeDims];  // m/T
    if (acc < 0.0 || acc > 1.0 + 1e-12) throw std::logic_error("feature window: accvol outside [0,1]");
    const bool new_day = day_frac < prev_day_frac;
    if (!new_day && acc + 1e-12 < prev) throw std::logic_error("feature window: accvol decreasing within a day");
    prev = acc;
    prev_day_frac = day_frac;
  }
}

std::vector<std::string> stock_vocabulary(const std::vector<data::TradingDay>& days) {
  std::vector<std::string> symbols;
  for (const auto& d : days) symbols.push_back(d.symbol);
  std::sort(symbols.begin(), symbols.end());
  symbols.erase(std::unique(symbols.begin(), symbols.end()), symbols.end());
  return symbols;
}

namespace {

// Per-minute raw inputs for one stock, all days concatenated.
struct StockSeries {
  std::vector<double> volume;
  std::vector<double> accvol_frac;
  std::vector<double> turnover;
  std::vector<double> amount;
  std::vector<double> y;
  std::vector<std::array<double, kTimeDims>> time_enc;
  std::vector<data::Date> date;
  std::vector<int> minute;
};

StockSeries collect_series(const std::vector<const data::TradingDay*>& days, const data::StockMeta& meta) {
  StockSeries s;
  for (const data::TradingDay* day : days) {
    const RatioSeries ratios = ratio_transform(*day);
    const double total = static_cast<double>(day->total_volume);
    double acc = 0.0;
    for (const data::MinuteBar& b : day->bars) {
      acc += static_cast<double>(b.volume);
      s.volume.push_back(static_cast<double>(b.volume));
      s.accvol_frac.push_back(acc / total);
      s.turnover.push_back(data::turnover_rate(b, meta));
      s.amount.push_back(b.amount);
      s.y.push_back(ratios.y[b.minute_index]);
      s.time_enc.push_back(time_encoding(b.minute_index, day->bars_per_day(), day->date));
      s.date.push_back(day->date);
      s.minute.push_back(b.minute_index);
    }
  }
  return s;
}

struct SegmentStats {
  double mean = 0.0;
  double stddev = 0.0;
};

SegmentStats segment_stats(const std::vector<double>& v, std::size_t start, std::size_t len) {
  SegmentStats st;
  for (std::size_t i = start; i < start + len; ++i) st.mean += v[i];
  st.mean /= static_cast<double>(len);
  double var = 0.0;
  for (std::size_t i = start; i < start + len; ++i) var += (v[i] - st.mean) * (v[i] - st.mean);
  st.stddev = std::sqrt(var / static_cast<double>(len));
  return st;
}

}  // namespace

std::vector<FeatureWindow> build_windows(const std::vector<data::TradingDay>& days, const data::MetaTable& meta,
                                         int context_len, int horizon) {
  if (context_len < 1 || horizon < 1) throw std::invalid_argument("build_windows: context and horizon must be >= 1");

  const std::vector<std::string> vocab = stock_vocabulary(days);
  std::map<std::string, std::vector<const data::TradingDay*>> by_symbol;
  for (const auto& d : days) by_symbol[d.symbol].push_back(&d);

  std::vector<FeatureWindow> windows;
  for (std::size_t sid = 0; sid < vocab.size(); ++sid) {
    const std::string& symbol = vocab[sid];
    auto& stock_days = by_symbol[symbol];
    std::sort(stock_days.begin(), stock_days.end(),
              [](const data::TradingDay* a, const data::TradingDay* b) { return a->date < b->date; });
    for (std::size_t i = 1; i < stock_days.size(); ++i) {
      if (stock_days[i]->date == stock_days[i - 1]->date)
        throw std::invalid_argument("build_windows: duplicate day " + symbol + " " + stock_days[i]->date.str());
    }
    auto meta_it = meta.find(symbol);
    if (meta_it == meta.end()) throw std::invalid_argument("build_windows: no meta for symbol " + symbol);

    const StockSeries s = collect_series(stock_days, meta_it->second);
    const long total_len = static_cast<long>(s.y.size());
    const long n_windows = total_len - context_len - horizon + 1;
    if (n_windows <= 0) continue;

    const int bars_per_day = stock_days.front()->bars_per_day();
    for (long start = 0; start < n_windows; ++start) {
      FeatureWindow w;
      w.stock_id = static_cast<int>(sid);
      w.symbol = symbol;
      w.bars_per_day = bars_per_day;
      w.context_len = context_len;
      w.horizon = horizon;

      const std::size_t ctx_start = static_cast<std::size_t>(start);
      const SegmentStats vol_st = segment_stats(s.volume, ctx_start, context_len);
      const SegmentStats to_st = segment_stats(s.turnover, ctx_start, context_len);
      const SegmentStats amt_st = segment_stats(s.amount, ctx_start, context_len);
      w.norm_stats.mean = {vol_st.mean, to_st.mean, amt_st.mean};
      w.norm_stats.stddev = {vol_st.stddev, to_st.stddev, amt_st.stddev};

      auto norm = [](double v, const SegmentStats& st) { return st.stddev > 0.0 ? (v - st.mean) / st.stddev : 0.0; };

      w.context.resize(static_cast<std::size_t>(context_len) * kFeatureDim);
      for (int r = 0; r < context_len; ++r) {
        const std::size_t i = ctx_start + r;
        double* row = &w.context[static_cast<std::size_t>(r) * kFeatureDim];
        row[kColVolume] = norm(s.volume[i], vol_st);
        row[kColAccVol] = s.accvol_frac[i];
        row[kColTurnover] = norm(s.turnover[i], to_st);
        row[kColAmount] = norm(s.amount[i], amt_st);
        for (int t = 0; t < kTimeDims; ++t) row[kVolumeDims + t] = s.time_enc[i][t];
      }

      w.time_enc_future.resize(static_cast<std::size_t>(horizon) * kTimeDims);
      w.target.resize(horizon);
      for (int h = 0; h < horizon; ++h) {
        const std::size_t i = ctx_start + context_len + h;
        for (int t = 0; t < kTimeDims; ++t) w.time_enc_future[static_cast<std::size_t>(h) * kTimeDims + t] = s.time_enc[i][t];
        w.target[h] = s.y[i];
      }
      const std::size_t first = ctx_start + context_len;
      const std::size_t last = first + horizon - 1;
      w.first_target_date = s.date[first];
      w.first_target_minute = s.minute[first];
      w.target_date = s.date[last];

      w.check();
      windows.push_back(std::move(w));
    }
  }
  return windows;
}

DatasetSplit split_by_date(std::vector<FeatureWindow> windows, const data::Date& train_end,
                           const data::Date& val_end) {
  if (!(train_end < val_end)) throw std::invalid_argument("split_by_date: train_end must precede val_end");
  DatasetSplit split;
  for (auto& w : windows) {
    if (w.target_date <= train_end) {
      split.train.push_back(std::move(w));
    } else if (w.target_date <= val_end) {
      split.validation.push_back(std::move(w));
    } else {
      split.test.push_back(std::move(w));
    }
  }
  if (split.train.empty()) split.warnings.push_back("train partition is empty");
  if (split.validation.empty()) split.warnings.push_back("validation partition is empty");
  if (split.test.empty()) split.warnings.push_back("test partition is empty");
  return split;
}

}  // namespace ive::features
