#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace ive::data {

// Calendar day, proleptic Gregorian. Comparable, hashable by serial number.
struct Date {
  int year = 1970;
  int month = 1;
  int day = 1;

  static Date parse(std::string_view iso);  // "YYYY-MM-DD"
  std::string str() const;

  long serial() const;                // days since 1970-01-01
  static Date from_serial(long days);
  int weekday() const;                // 0 = Monday .. 6 = Sunday
  Date next_weekday() const;          // following Mon-Fri day

  friend auto operator<=>(const Date& a, const Date& b) {
    return std::tie(a.year, a.month, a.day) <=> std::tie(b.year, b.month, b.day);
  }
  friend bool operator==(const Date& a, const Date& b) = default;
};

struct MinuteBar {
  std::string symbol;
  Date date;
  int minute_index = 0;
  double open = 0.0;
  double high = 0.0;
  double low = 0.0;
  double close = 0.0;
  long long volume = 0;   // shares
  double amount = 0.0;    // traded value

  // low <= min(open, close) <= max(open, close) <= high; volume >= 0;
  // amount >= 0; volume == 0 implies amount == 0.
  void validate() const;
};

enum class Market { KR, US, SYNTH };

std::string market_str(Market m);
Market parse_market(std::string_view s);

struct StockMeta {
  std::string symbol;
  long long shares_outstanding = 0;  // > 0
  Market market = Market::SYNTH;
};

// Keyed by symbol; std::map keeps iteration deterministic.
using MetaTable = std::map<std::string, StockMeta>;

// A full session: exactly T bars with contiguous minute_index 0..T-1.
struct TradingDay {
  std::string symbol;
  Date date;
  std::vector<MinuteBar> bars;
  long long total_volume = 0;

  int bars_per_day() const { return static_cast<int>(bars.size()); }

  // Validates the bar sequence and fills total_volume.
  static TradingDay build(std::string symbol, Date date, std::vector<MinuteBar> bars);
};

struct SyntheticConfig {
  int n_stocks = 2;
  int n_days = 2;
  int bars_per_day = 390;
  double u_shape_depth = 4.0;   // open/mid intensity ratio
  double noise_sigma = 0.3;     // std of multiplicative log-normal noise
  double spike_rate = 1.0;      // expected spikes per day (Poisson)
  double spike_scale = 8.0;     // mean volume multiplier per spike
  double price_vol = 0.002;     // per-minute log-return std
  std::uint64_t seed = 1;

  void validate() const;
};

struct SpikeEvent {
  std::string symbol;
  Date date;
  int minute = 0;
  double multiplier = 1.0;
};

struct SynthResult {
  std::vector<TradingDay> days;
  MetaTable meta;
  std::vector<SpikeEvent> spikes;  // ground truth, for diagnostics
};

// Deterministic U-shape intensity: quadratic in minute, 1.0 at mid-session,
// `depth` at both endpoints.
double u_shape_intensity(int minute, int bars_per_day, double depth);

// Same seed, same output, bit for bit.
SynthResult generate_synthetic(const SyntheticConfig& config);

struct LoadResult {
  std::vector<TradingDay> days;
  int rejected_days = 0;
  std::vector<std::string> warnings;
};

// CSV with header "symbol,date,minute,open,high,low,close,volume,amount".
// Days missing more than 5% of minutes are rejected; smaller gaps are filled
// with zero-volume bars carrying the previous close.
LoadResult load_minute_bars(const std::string& path, const MetaTable& meta,
                            int bars_per_day = 390);

void write_minute_bars(const std::string& path, const std::vector<TradingDay>& days);

// CSV with header "symbol,shares_outstanding,market".
MetaTable load_meta(const std::string& path);
void write_meta(const std::string& path, const MetaTable& meta);

double typical_price(const MinuteBar& bar);  // (high + low + close) / 3

// Volume-weighted typical price over the session. Throws if total volume is 0.
double day_vwap(const TradingDay& day);

// Volatility-interruption flag: session high >= 1.10 x open or
// session low <= 0.90 x open, open taken from bar 0.
bool detect_vi(const TradingDay& day);

double turnover_rate(const MinuteBar& bar, const StockMeta& meta);

}  // namespace ive::data
