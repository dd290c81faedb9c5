#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "ive/marketdata.hpp"

namespace ive::features {

// Ratio clamp floor: v_t is clamped below by kRatioEps * V_day before the log.
inline constexpr double kRatioEps = 1e-6;

// Time encoding: [m/T, sin(2*pi*m/T), cos(2*pi*m/T), day-of-week one-hot (5)].
inline constexpr int kTimeDims = 8;

// Volume block: normalized volume, accumulated-volume fraction, normalized
// turnover rate, normalized amount.
inline constexpr int kVolumeDims = 4;
inline constexpr int kFeatureDim = kVolumeDims + kTimeDims;

// Column indexes inside the volume block.
inline constexpr int kColVolume = 0;
inline constexpr int kColAccVol = 1;
inline constexpr int kColTurnover = 2;
inline constexpr int kColAmount = 3;

// Log-transformed intraday volume ratio, y_t = ln(T * v_t / V_day), with v_t
// clamped below by kRatioEps * V_day so zero-volume minutes stay finite.
struct RatioSeries {
  std::string symbol;
  data::Date date;
  std::vector<double> y;
};

RatioSeries ratio_transform(const data::TradingDay& day);

// Per-column normalization statistics (population std; zero std maps the
// whole column to zeros).
struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

struct ZScoreResult {
  std::vector<double> values;
  double mean = 0.0;
  double stddev = 0.0;
};

ZScoreResult zscore(std::span<const double> series);

std::array<double, kTimeDims> time_encoding(int minute_index, int bars_per_day, const data::Date& date);

// One model sample: C context steps of features, H future time encodings,
// H transformed targets.
struct FeatureWindow {
  int stock_id = 0;
  std::string symbol;
  int bars_per_day = 0;
  data::Date target_date;      // date of the last target step (split key)
  data::Date first_target_date;
  int first_target_minute = 0; // minute index of target step 1 within its day
  int context_len = 0;
  int horizon = 0;
  std::vector<double> context;          // context_len x kFeatureDim, row-major
  std::vector<double> time_enc_future;  // horizon x kTimeDims
  std::vector<double> target;           // horizon
  NormStats norm_stats;

  // Throws if any entry is non-finite or the accumulated-volume column leaves
  // [0, 1] / decreases within a day segment.
  void check() const;
};

// Deterministic stock-id vocabulary: sorted distinct symbols.
std::vector<std::string> stock_vocabulary(const std::vector<data::TradingDay>& days);

// Sliding windows (stride 1) over each stock's concatenated minute series.
// Context features are normalized with statistics from that window's context
// segment only. Days must be sorted by date within each symbol.
std::vector<FeatureWindow> build_windows(const std::vector<data::TradingDay>& days, const data::MetaTable& meta,
                                         int context_len, int horizon);

struct DatasetSplit {
  std::vector<FeatureWindow> train;
  std::vector<FeatureWindow> validation;
  std::vector<FeatureWindow> test;
  std::vector<std::string> warnings;
};

// Chronological split by the date of each window's last target step;
// boundaries are inclusive on the left partition.
DatasetSplit split_by_date(std::vector<FeatureWindow> windows, const data::Date& train_end,
                           const data::Date& val_end);

}  // namespace ive::features
