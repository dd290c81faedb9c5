#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ive/marketdata.hpp"
#include "ive/rng.hpp"

using namespace ive;
using data::Date;
using data::MinuteBar;
using data::TradingDay;

namespace {

MinuteBar bar(const std::string& symbol, Date date, int minute, double open, double high, double low, double close,
              long long volume) {
  MinuteBar b;
  b.symbol = symbol;
  b.date = date;
  b.minute_index = minute;
  b.open = open;
  b.high = high;
  b.low = low;
  b.close = close;
  b.volume = volume;
  b.amount = volume > 0 ? data::typical_price(b) * static_cast<double>(volume) : 0.0;
  return b;
}

TradingDay flat_day(const std::string& symbol, Date date, int t, double price, long long volume_per_bar) {
  std::vector<MinuteBar> bars;
  for (int m = 0; m < t; ++m) bars.push_back(bar(symbol, date, m, price, price, price, price, volume_per_bar));
  return TradingDay::build(symbol, date, std::move(bars));
}

std::filesystem::path temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "ive_md_test";
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("date arithmetic") {
  Date d = Date::parse("2023-01-02");
  CHECK(d.year == 2023);
  CHECK(d.weekday() == 0);  // Monday
  CHECK(Date::parse("2023-01-06").weekday() == 4);
  CHECK(Date::parse("2023-01-06").next_weekday() == Date::parse("2023-01-09"));
  CHECK(Date::from_serial(d.serial()) == d);
  CHECK(d.str() == "2023-01-02");
  CHECK(Date::parse("2023-01-02") < Date::parse("2023-02-01"));
  CHECK_THROWS(Date::parse("2023/01/02"));
}

TEST_CASE("minute bar invariants") {
  Date d = Date::parse("2023-01-02");
  CHECK_NOTHROW(bar("A", d, 0, 10, 11, 9, 10.5, 100).validate());
  MinuteBar bad = bar("A", d, 0, 10, 9.5, 9, 10.5, 100);  // high below close
  CHECK_THROWS(bad.validate());
  MinuteBar neg = bar("A", d, 0, 10, 11, 9, 10.5, 100);
  neg.volume = -1;
  CHECK_THROWS(neg.validate());
  MinuteBar zero_vol = bar("A", d, 0, 10, 11, 9, 10.5, 0);
  zero_vol.amount = 5.0;
  CHECK_THROWS(zero_vol.validate());
}

TEST_CASE("day_vwap weighted mean") {
  Date d = Date::parse("2023-01-02");
  SUBCASE("single bar equals its typical price") {
    auto day = flat_day("A", d, 1, 100.0, 10);
    CHECK(data::day_vwap(day) == doctest::Approx(100.0));
  }
  SUBCASE("two bars weighted 10/30") {
    std::vector<MinuteBar> bars{bar("A", d, 0, 100, 100, 100, 100, 10), bar("A", d, 1, 200, 200, 200, 200, 30)};
    auto day = TradingDay::build("A", d, std::move(bars));
    CHECK(data::day_vwap(day) == doctest::Approx(175.0));
  }
  SUBCASE("zero volume day errors") {
    auto day = flat_day("A", d, 3, 100.0, 0);
    CHECK_THROWS(data::day_vwap(day));
  }
  SUBCASE("random day matches brute-force oracle and stays in price range") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<MinuteBar> bars;
      double pv = 0.0;
      long long v = 0;
      double lo = 1e300, hi = -1e300;
      for (int m = 0; m < 390; ++m) {
        const double open = 50 + 10 * rng.uniform();
        const double close = open * (1 + 0.01 * (rng.uniform() - 0.5));
        const double high = std::max(open, close) * (1 + 0.005 * rng.uniform());
        const double low = std::min(open, close) * (1 - 0.005 * rng.uniform());
        const long long vol = 1 + static_cast<long long>(rng.uniform_index(1000));
        auto b = bar("A", d, m, open, high, low, close, vol);
        const double tp = data::typical_price(b);
        pv += tp * static_cast<double>(vol);
        v += vol;
        lo = std::min(lo, tp);
        hi = std::max(hi, tp);
        bars.push_back(std::move(b));
      }
      auto day = TradingDay::build("A", d, std::move(bars));
      const double vwap = data::day_vwap(day);
      CHECK(vwap == doctest::Approx(pv / static_cast<double>(v)).epsilon(1e-9));
      CHECK(vwap >= lo);
      CHECK(vwap <= hi);
    }
  }
}

TEST_CASE("detect_vi thresholds") {
  Date d = Date::parse("2023-01-02");
  auto make_day = [&](double open, double high, double low) {
    std::vector<MinuteBar> bars{bar("A", d, 0, open, high, low, open, 10)};
    return TradingDay::build("A", d, std::move(bars));
  };
  CHECK(data::detect_vi(make_day(100, 110, 95)));        // high branch, boundary inclusive
  CHECK_FALSE(data::detect_vi(make_day(100, 109.99, 90.01)));
  CHECK(data::detect_vi(make_day(100, 105, 90)));        // low branch, boundary inclusive

  SUBCASE("invariant under uniform price scaling") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
      const double open = 50 + 100 * rng.uniform();
      const double high = open * (1 + 0.2 * rng.uniform());
      const double low = open * (1 - 0.2 * rng.uniform());
      const double k = 0.1 + 10 * rng.uniform();
      CHECK(data::detect_vi(make_day(open, high, low)) == data::detect_vi(make_day(k * open, k * high, k * low)));
    }
  }
}

TEST_CASE("turnover rate") {
  Date d = Date::parse("2023-01-02");
  data::StockMeta meta{"A", 100000000, data::Market::SYNTH};
  CHECK(data::turnover_rate(bar("A", d, 0, 10, 10, 10, 10, 0), meta) == 0.0);
  CHECK(data::turnover_rate(bar("A", d, 0, 10, 10, 10, 10, 1000000), meta) == doctest::Approx(0.01));

  SUBCASE("additivity over a day") {
    Rng rng(11);
    std::vector<MinuteBar> bars;
    for (int m = 0; m < 100; ++m)
      bars.push_back(bar("A", d, m, 10, 10, 10, 10, static_cast<long long>(rng.uniform_index(500))));
    auto day = TradingDay::build("A", d, std::move(bars));
    double acc = 0.0;
    for (const auto& b : day.bars) acc += data::turnover_rate(b, meta);
    CHECK(acc == doctest::Approx(static_cast<double>(day.total_volume) / 1e8).epsilon(1e-12));
  }
}

TEST_CASE("u-shape intensity pins endpoint ratio") {
  const double depth = 4.0;
  // Odd bar count puts the minimum exactly on a minute.
  const int t = 391;
  CHECK(data::u_shape_intensity(0, t, depth) == doctest::Approx(depth).epsilon(1e-15));
  CHECK(data::u_shape_intensity((t - 1) / 2, t, depth) == 1.0);
  CHECK(data::u_shape_intensity(t - 1, t, depth) == doctest::Approx(depth).epsilon(1e-15));
  // Endpoint / mid ratio equals the configured depth to within 1 ulp.
  const double ratio = data::u_shape_intensity(0, t, depth) / data::u_shape_intensity((t - 1) / 2, t, depth);
  CHECK(std::abs(ratio - depth) <= std::ldexp(depth, -52));
}

TEST_CASE("synthetic generator") {
  data::SyntheticConfig cfg;
  cfg.n_stocks = 2;
  cfg.n_days = 3;
  cfg.bars_per_day = 60;
  cfg.seed = 42;

  SUBCASE("deterministic: same seed, identical output") {
    auto a = data::generate_synthetic(cfg);
    auto b = data::generate_synthetic(cfg);
    REQUIRE(a.days.size() == b.days.size());
    for (std::size_t i = 0; i < a.days.size(); ++i) {
      CHECK(a.days[i].symbol == b.days[i].symbol);
      CHECK(a.days[i].total_volume == b.days[i].total_volume);
      for (std::size_t m = 0; m < a.days[i].bars.size(); ++m) {
        CHECK(a.days[i].bars[m].close == b.days[i].bars[m].close);
        CHECK(a.days[i].bars[m].volume == b.days[i].bars[m].volume);
      }
    }
    CHECK(a.spikes.size() == b.spikes.size());
  }

  SUBCASE("noise off reproduces the U-shape") {
    data::SyntheticConfig quiet = cfg;
    quiet.noise_sigma = 0.0;
    quiet.spike_rate = 0.0;
    auto r = data::generate_synthetic(quiet);
    const auto& day = r.days.front();
    // Integer rounding only: each volume within 1 share of base * intensity.
    const double implied_base = static_cast<double>(day.bars[0].volume) / data::u_shape_intensity(0, 60, 4.0);
    for (int m = 0; m < 60; ++m) {
      const double expect = implied_base * data::u_shape_intensity(m, 60, 4.0);
      CHECK(std::abs(static_cast<double>(day.bars[m].volume) - expect) <= 1.0);
    }
  }

  SUBCASE("mean spikes per day tracks the rate") {
    data::SyntheticConfig spiky = cfg;
    spiky.n_stocks = 1;
    spiky.n_days = 1000;
    spiky.bars_per_day = 39;
    spiky.spike_rate = 2.0;
    auto r = data::generate_synthetic(spiky);
    const double mean = static_cast<double>(r.spikes.size()) / 1000.0;
    CHECK(mean > 1.8);
    CHECK(mean < 2.2);
  }

  SUBCASE("bars satisfy invariants and meta is populated") {
    auto r = data::generate_synthetic(cfg);
    CHECK(r.meta.size() == 2);
    for (const auto& day : r.days) {
      CHECK(day.bars_per_day() == 60);
      for (const auto& b : day.bars) CHECK_NOTHROW(b.validate());
    }
  }
}

TEST_CASE("bar csv round trip") {
  auto dir = temp_dir();
  data::SyntheticConfig cfg;
  cfg.n_stocks = 2;
  cfg.n_days = 2;
  cfg.bars_per_day = 30;
  cfg.seed = 9;
  auto r = data::generate_synthetic(cfg);

  const auto bars_path = (dir / "bars.csv").string();
  const auto meta_path = (dir / "meta.csv").string();
  data::write_minute_bars(bars_path, r.days);
  data::write_meta(meta_path, r.meta);

  auto meta = data::load_meta(meta_path);
  CHECK(meta.size() == r.meta.size());
  auto loaded = data::load_minute_bars(bars_path, meta, 30);
  REQUIRE(loaded.days.size() == r.days.size());
  CHECK(loaded.rejected_days == 0);

  // Serialize the loaded days again: bytes must match (load -> serialize is a
  // fixed point, so load -> serialize -> load is identity).
  const auto bars_path2 = (dir / "bars2.csv").string();
  data::write_minute_bars(bars_path2, loaded.days);
  std::ifstream f1(bars_path), f2(bars_path2);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
}

TEST_CASE("loader gap handling") {
  auto dir = temp_dir();
  data::MetaTable meta;
  meta["A"] = data::StockMeta{"A", 1000000, data::Market::SYNTH};

  SUBCASE("complete day loads clean") {
    auto path = (dir / "full.csv").string();
    std::ofstream out(path);
    out << "symbol,date,minute,open,high,low,close,volume,amount\n";
    for (int m = 0; m < 390; ++m) out << "A,2023-01-02," << m << ",10,10,10,10,5,50\n";
    out.close();
    auto r = data::load_minute_bars(path, meta, 390);
    REQUIRE(r.days.size() == 1);
    CHECK(r.days[0].total_volume == 390 * 5);
    CHECK(r.warnings.empty());
  }

  SUBCASE("single gap filled with zero-volume previous-close bar") {
    auto path = (dir / "gap.csv").string();
    std::ofstream out(path);
    out << "symbol,date,minute,open,high,low,close,volume,amount\n";
    for (int m = 0; m < 390; ++m) {
      if (m == 100) continue;
      out << "A,2023-01-02," << m << ",10,11,9," << (m == 99 ? 10.5 : 10.0) << ",5,50\n";
    }
    out.close();
    auto r = data::load_minute_bars(path, meta, 390);
    REQUIRE(r.days.size() == 1);
    REQUIRE(r.days[0].bars.size() == 390);
    const auto& fill = r.days[0].bars[100];
    CHECK(fill.volume == 0);
    CHECK(fill.amount == 0.0);
    CHECK(fill.open == doctest::Approx(10.5));  // previous close
    CHECK(fill.close == doctest::Approx(10.5));
  }

  SUBCASE("day with 300 of 390 rows rejected") {
    auto path = (dir / "sparse.csv").string();
    std::ofstream out(path);
    out << "symbol,date,minute,open,high,low,close,volume,amount\n";
    for (int m = 0; m < 300; ++m) out << "A,2023-01-02," << m << ",10,10,10,10,5,50\n";
    out.close();
    auto r = data::load_minute_bars(path, meta, 390);
    CHECK(r.days.empty());
    CHECK(r.rejected_days == 1);
    REQUIRE(r.warnings.size() == 1);
  }

  SUBCASE("malformed rows carry line numbers") {
    auto path = (dir / "bad.csv").string();
    std::ofstream out(path);
    out << "symbol,date,minute,open,high,low,close,volume,amount\n";
    out << "A,2023-01-02,0,10,10,10\n";  // short row on line 2
    out.close();
    try {
      data::load_minute_bars(path, meta, 390);
      FAIL("expected throw");
    } catch (const std::exception& e) {
      CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
  }

  SUBCASE("unknown symbol rejected") {
    auto path = (dir / "unk.csv").string();
    std::ofstream out(path);
    out << "symbol,date,minute,open,high,low,close,volume,amount\n";
    out << "ZZZ,2023-01-02,0,10,10,10,10,5,50\n";
    out.close();
    CHECK_THROWS(data::load_minute_bars(path, meta, 390));
  }
}
