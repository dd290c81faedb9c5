#include "ive/marketdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ive/rng.hpp"

namespace ive::data {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string token;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(token);
      token.clear();
    } else if (ch != '\r') {
      token.push_back(ch);
    }
  }
  fields.push_back(token);
  return fields;
}

[[noreturn]] void parse_fail(const std::string& path, std::size_t line_no, const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + what);
}

double parse_double(const std::string& s, const std::string& path, std::size_t line_no) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    parse_fail(path, line_no, "bad number '" + s + "'");
  }
}

long long parse_ll(const std::string& s, const std::string& path, std::size_t line_no) {
  try {
    std::size_t pos = 0;
    long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    parse_fail(path, line_no, "bad integer '" + s + "'");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Date
// ---------------------------------------------------------------------------

Date Date::parse(std::string_view iso) {
  if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-')
    throw std::runtime_error("bad date '" + std::string(iso) + "' (want YYYY-MM-DD)");
  auto digits = [&](int from, int len) {
    int v = 0;
    for (int i = from; i < from + len; ++i) {
      char c = iso[i];
      if (c < '0' || c > '9') throw std::runtime_error("bad date '" + std::string(iso) + "'");
      v = v * 10 + (c - '0');
    }
    return v;
  };
  Date d{digits(0, 4), digits(5, 2), digits(8, 2)};
  if (d.month < 1 || d.month > 12 || d.day < 1 || d.day > 31)
    throw std::runtime_error("bad date '" + std::string(iso) + "'");
  return d;
}

std::string Date::str() const {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
  return buf;
}

// Days-from-civil, Gregorian (Hinnant's algorithm).
long Date::serial() const {
  int y = year - (month <= 2);
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (month + (month > 2 ? -3 : 9)) + 2) / 5 + day - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097L + static_cast<long>(doe) - 719468L;
}

Date Date::from_serial(long days) {
  days += 719468L;
  const long era = (days >= 0 ? days : days - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(days - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const int y = static_cast<int>(yoe) + static_cast<int>(era) * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : -9);
  return Date{y + (m <= 2), static_cast<int>(m), static_cast<int>(d)};
}

int Date::weekday() const {
  long s = serial();
  return static_cast<int>(((s % 7) + 7 + 3) % 7);  // 1970-01-01 was a Thursday
}

Date Date::next_weekday() const {
  Date d = from_serial(serial() + 1);
  while (d.weekday() >= 5) d = from_serial(d.serial() + 1);
  return d;
}

// ---------------------------------------------------------------------------
// Bars and days
// ---------------------------------------------------------------------------

void MinuteBar::validate() const {
  if (minute_index < 0) throw std::invalid_argument("bar: negative minute_index");
  const double body_lo = std::min(open, close);
  const double body_hi = std::max(open, close);
  if (!(low <= body_lo && body_hi <= high))
    throw std::invalid_argument("bar " + symbol + " " + date.str() + " m" + std::to_string(minute_index) +
                                ": OHLC ordering violated");
  if (volume < 0) throw std::invalid_argument("bar: negative volume");
  if (amount < 0) throw std::invalid_argument("bar: negative amount");
  if (volume == 0 && amount != 0) throw std::invalid_argument("bar: zero volume with nonzero amount");
}

std::string market_str(Market m) {
  switch (m) {
    case Market::KR: return "KR";
    case Market::US: return "US";
    case Market::SYNTH: return "SYNTH";
  }
  throw std::logic_error("bad market enum");
}

Market parse_market(std::string_view s) {
  if (s == "KR") return Market::KR;
  if (s == "US") return Market::US;
  if (s == "SYNTH") return Market::SYNTH;
  throw std::runtime_error("bad market '" + std::string(s) + "'");
}

TradingDay TradingDay::build(std::string symbol, Date date, std::vector<MinuteBar> bars) {
  if (bars.empty()) throw std::invalid_argument("trading day with no bars");
  long long total = 0;
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const MinuteBar& b = bars[i];
    if (b.minute_index != static_cast<int>(i))
      throw std::invalid_argument("trading day " + symbol + " " + date.str() + ": minute_index not contiguous at " +
                                  std::to_string(i));
    if (b.symbol != symbol || !(b.date == date))
      throw std::invalid_argument("trading day " + symbol + " " + date.str() + ": bar symbol/date mismatch");
    b.validate();
    total += b.volume;
  }
  TradingDay day;
  day.symbol = std::move(symbol);
  day.date = date;
  day.bars = std::move(bars);
  day.total_volume = total;
  return day;
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

void SyntheticConfig::validate() const {
  if (n_stocks <= 0 || n_days <= 0 || bars_per_day <= 0)
    throw std::invalid_argument("synthetic config: counts must be positive");
  if (u_shape_depth <= 0 || spike_scale <= 0)
    throw std::invalid_argument("synthetic config: rates/scales must be positive");
  if (noise_sigma < 0 || spike_rate < 0 || price_vol < 0)
    throw std::invalid_argument("synthetic config: negative rate");
}

double u_shape_intensity(int minute, int bars_per_day, double depth) {
  if (bars_per_day == 1) return depth;
  const double mid = (bars_per_day - 1) / 2.0;
  const double x = (minute - mid) / mid;  // -1 at open, 0 mid, +1 at close
  return 1.0 + (depth - 1.0) * x * x;
}

SynthResult generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  SynthResult out;
  const int T = config.bars_per_day;
  const Date start{2023, 1, 2};  // a Monday

  std::vector<Date> dates;
  dates.reserve(config.n_days);
  Date d = start;
  for (int i = 0; i < config.n_days; ++i) {
    dates.push_back(d);
    d = d.next_weekday();
  }

  for (int s = 0; s < config.n_stocks; ++s) {
    char name[16];
    std::snprintf(name, sizeof(name), "S%04d", s);
    const std::string symbol = name;

    Rng stock_rng(mix_seed(config.seed, static_cast<std::uint64_t>(s)));
    const double base_volume = 1e6 * stock_rng.uniform(0.5, 2.0);
    const long long shares = static_cast<long long>(std::llround(stock_rng.uniform(5e7, 2e8)));
    out.meta[symbol] = StockMeta{symbol, shares, Market::SYNTH};

    double last_close = stock_rng.uniform(20.0, 200.0);

    for (int di = 0; di < config.n_days; ++di) {
      Rng rng(mix_seed(config.seed, (static_cast<std::uint64_t>(s) << 20) + 0x10000ull + di));

      const int n_spikes = rng.poisson(config.spike_rate);
      std::vector<int> spike_minutes =
          n_spikes > 0 ? rng.sample_without_replacement(std::min(n_spikes, T), T) : std::vector<int>{};
      std::vector<double> spike_mult(spike_minutes.size());
      for (std::size_t i = 0; i < spike_minutes.size(); ++i) {
        spike_mult[i] = config.spike_scale * rng.uniform(0.75, 1.25);
        out.spikes.push_back(SpikeEvent{symbol, dates[di], spike_minutes[i], spike_mult[i]});
      }

      std::vector<MinuteBar> bars(T);
      for (int m = 0; m < T; ++m) {
        const double open = last_close;
        const double ret = rng.normal(0.0, config.price_vol);
        const double close = open * std::exp(ret);
        const double wick_up = std::abs(rng.normal(0.0, config.price_vol * 0.5));
        const double wick_dn = std::abs(rng.normal(0.0, config.price_vol * 0.5));
        const double high = std::max(open, close) * std::exp(wick_up);
        const double low = std::min(open, close) * std::exp(-wick_dn);
        const double vol_noise = std::exp(rng.normal(0.0, config.noise_sigma));
        last_close = close;

        double mult = 1.0;
        for (std::size_t i = 0; i < spike_minutes.size(); ++i) {
          if (spike_minutes[i] == m) {
            mult = spike_mult[i];
            break;
          }
        }

        const double intensity = u_shape_intensity(m, T, config.u_shape_depth);
        long long volume = std::llround(base_volume * intensity * vol_noise * mult);
        if (volume < 0) volume = 0;

        MinuteBar bar;
        bar.symbol = symbol;
        bar.date = dates[di];
        bar.minute_index = m;
        bar.open = open;
        bar.high = high;
        bar.low = low;
        bar.close = close;
        bar.volume = volume;
        bar.amount = volume > 0 ? typical_price(bar) * static_cast<double>(volume) : 0.0;
        bars[m] = std::move(bar);
      }
      out.days.push_back(TradingDay::build(symbol, dates[di], std::move(bars)));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV I/O
// ---------------------------------------------------------------------------

static const char* kBarHeader = "symbol,date,minute,open,high,low,close,volume,amount";
static const char* kMetaHeader = "symbol,shares_outstanding,market";

LoadResult load_minute_bars(const std::string& path, const MetaTable& meta, int bars_per_day) {
  if (bars_per_day <= 0) throw std::invalid_argument("bars_per_day must be positive");
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open bar file '" + path + "'");

  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kBarHeader)
    throw std::runtime_error(path + ": bad header '" + line + "', expected '" + kBarHeader + "'");

  // (symbol, date serial) -> minute -> bar
  std::map<std::pair<std::string, long>, std::map<int, MinuteBar>> groups;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto f = split_csv_line(line);
    if (f.size() != 9) parse_fail(path, line_no, "expected 9 columns, got " + std::to_string(f.size()));

    MinuteBar bar;
    bar.symbol = f[0];
    try {
      bar.date = Date::parse(f[1]);
    } catch (const std::exception& e) {
      parse_fail(path, line_no, e.what());
    }
    bar.minute_index = static_cast<int>(parse_ll(f[2], path, line_no));
    bar.open = parse_double(f[3], path, line_no);
    bar.high = parse_double(f[4], path, line_no);
    bar.low = parse_double(f[5], path, line_no);
    bar.close = parse_double(f[6], path, line_no);
    bar.volume = parse_ll(f[7], path, line_no);
    bar.amount = parse_double(f[8], path, line_no);

    if (meta.find(bar.symbol) == meta.end()) parse_fail(path, line_no, "unknown symbol '" + bar.symbol + "'");
    if (bar.minute_index < 0 || bar.minute_index >= bars_per_day)
      parse_fail(path, line_no, "minute " + std::to_string(bar.minute_index) + " out of [0, " +
                                    std::to_string(bars_per_day) + ")");
    try {
      bar.validate();
    } catch (const std::exception& e) {
      parse_fail(path, line_no, e.what());
    }

    auto& day = groups[{bar.symbol, bar.date.serial()}];
    if (!day.emplace(bar.minute_index, std::move(bar)).second)
      parse_fail(path, line_no, "duplicate minute within a (symbol, date)");
  }

  LoadResult result;
  const int max_missing = static_cast<int>(bars_per_day * 0.05);
  for (auto& [key, minutes] : groups) {
    const std::string& symbol = key.first;
    const Date date = Date::from_serial(key.second);
    const int missing = bars_per_day - static_cast<int>(minutes.size());
    if (missing > max_missing) {
      ++result.rejected_days;
      result.warnings.push_back(symbol + " " + date.str() + ": " + std::to_string(missing) + "/" +
                                std::to_string(bars_per_day) + " minutes missing; day rejected");
      continue;
    }

    std::vector<MinuteBar> bars;
    bars.reserve(bars_per_day);
    for (int m = 0; m < bars_per_day; ++m) {
      auto it = minutes.find(m);
      if (it != minutes.end()) {
        bars.push_back(std::move(it->second));
        continue;
      }
      // Gap fill: zero volume, flat prices at the previous close (next open
      // when the gap is at the start of the session).
      double px;
      if (!bars.empty()) {
        px = bars.back().close;
      } else {
        px = minutes.begin()->second.open;
      }
      MinuteBar fill;
      fill.symbol = symbol;
      fill.date = date;
      fill.minute_index = m;
      fill.open = fill.high = fill.low = fill.close = px;
      fill.volume = 0;
      fill.amount = 0.0;
      bars.push_back(std::move(fill));
    }
    TradingDay day = TradingDay::build(symbol, date, std::move(bars));
    if (day.total_volume == 0)
      result.warnings.push_back(symbol + " " + date.str() + ": total volume is zero");
    result.days.push_back(std::move(day));
  }
  return result;
}

void write_minute_bars(const std::string& path, const std::vector<TradingDay>& days) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write bar file '" + path + "'");
  out << kBarHeader << "\n";
  for (const TradingDay& day : days) {
    for (const MinuteBar& b : day.bars) {
      out << b.symbol << ',' << b.date.str() << ',' << b.minute_index << ',' << fmt_double(b.open) << ','
          << fmt_double(b.high) << ',' << fmt_double(b.low) << ',' << fmt_double(b.close) << ',' << b.volume << ','
          << fmt_double(b.amount) << "\n";
    }
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

MetaTable load_meta(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open meta file '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kMetaHeader)
    throw std::runtime_error(path + ": bad header '" + line + "', expected '" + kMetaHeader + "'");

  MetaTable meta;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto f = split_csv_line(line);
    if (f.size() != 3) parse_fail(path, line_no, "expected 3 columns, got " + std::to_string(f.size()));
    StockMeta m;
    m.symbol = f[0];
    m.shares_outstanding = parse_ll(f[1], path, line_no);
    if (m.shares_outstanding <= 0) parse_fail(path, line_no, "shares_outstanding must be positive");
    try {
      m.market = parse_market(f[2]);
    } catch (const std::exception& e) {
      parse_fail(path, line_no, e.what());
    }
    meta[m.symbol] = std::move(m);
  }
  return meta;
}

void write_meta(const std::string& path, const MetaTable& meta) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write meta file '" + path + "'");
  out << kMetaHeader << "\n";
  for (const auto& [symbol, m] : meta) {
    out << symbol << ',' << m.shares_outstanding << ',' << market_str(m.market) << "\n";
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// Session statistics
// ---------------------------------------------------------------------------

double typical_price(const MinuteBar& bar) { return (bar.high + bar.low + bar.close) / 3.0; }

double day_vwap(const TradingDay& day) {
  if (day.total_volume <= 0)
    throw std::runtime_error("day_vwap undefined: " + day.symbol + " " + day.date.str() + " has zero volume");
  double pv = 0.0;
  double v = 0.0;
  for (const MinuteBar& b : day.bars) {
    pv += typical_price(b) * static_cast<double>(b.volume);
    v += static_cast<double>(b.volume);
  }
  return pv / v;
}

bool detect_vi(const TradingDay& day) {
  const double open = day.bars.front().open;
  double high = day.bars.front().high;
  double low = day.bars.front().low;
  for (const MinuteBar& b : day.bars) {
    high = std::max(high, b.high);
    low = std::min(low, b.low);
  }
  // Ratio form: 110/100 rounds to exactly 1.10, so the boundary is inclusive.
  return high / open >= 1.10 || low / open <= 0.90;
}

double turnover_rate(const MinuteBar& bar, const StockMeta& meta) {
  if (meta.shares_outstanding <= 0) throw std::invalid_argument("turnover_rate: shares_outstanding must be positive");
  return static_cast<double>(bar.volume) / static_cast<double>(meta.shares_outstanding);
}

}  // namespace ive::data
