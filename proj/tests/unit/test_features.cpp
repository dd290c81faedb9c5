#include <doctest.h>

#include <cmath>

#include "ive/features.hpp"
#include "ive/marketdata.hpp"

using namespace ive;
using data::Date;
using data::MinuteBar;
using data::TradingDay;

namespace {

TradingDay day_with_volumes(const std::string& symbol, Date date, const std::vector<long long>& volumes) {
  std::vector<MinuteBar> bars;
  for (std::size_t m = 0; m < volumes.size(); ++m) {
    MinuteBar b;
    b.symbol = symbol;
    b.date = date;
    b.minute_index = static_cast<int>(m);
    b.open = b.high = b.low = b.close = 100.0;
    b.volume = volumes[m];
    b.amount = 100.0 * static_cast<double>(volumes[m]);
    bars.push_back(std::move(b));
  }
  return TradingDay::build(symbol, date, std::move(bars));
}

data::MetaTable one_meta(const std::string& symbol) {
  data::MetaTable meta;
  meta[symbol] = data::StockMeta{symbol, 100000000, data::Market::SYNTH};
  return meta;
}

}  // namespace

TEST_CASE("ratio transform") {
  Date d = Date::parse("2023-01-02");
  SUBCASE("uniform volumes map to zero") {
    auto rs = features::ratio_transform(day_with_volumes("A", d, {1, 1, 1, 1}));
    for (double y : rs.y) CHECK(y == doctest::Approx(0.0).epsilon(1e-15));
    double mean = 0.0;
    for (double y : rs.y) mean += y;
    CHECK(mean == 0.0);
  }
  SUBCASE("stated formula with clamping") {
    auto rs = features::ratio_transform(day_with_volumes("A", d, {2, 1, 1, 0}));
    CHECK(rs.y[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(rs.y[3] == doctest::Approx(std::log(4e-6)).epsilon(1e-12));
  }
  SUBCASE("inverse recovers unclamped ratios") {
    auto day = day_with_volumes("A", d, {5, 7, 11, 13, 9});
    auto rs = features::ratio_transform(day);
    for (std::size_t m = 0; m < rs.y.size(); ++m) {
      const double recovered = std::exp(rs.y[m]) / 5.0;
      const double truth = static_cast<double>(day.bars[m].volume) / static_cast<double>(day.total_volume);
      CHECK(recovered == doctest::Approx(truth).epsilon(1e-12));
    }
  }
  SUBCASE("sum of exp(y)/T is 1 when nothing clamps") {
    auto rs = features::ratio_transform(day_with_volumes("A", d, {5, 7, 11, 13, 9}));
    double acc = 0.0;
    for (double y : rs.y) acc += std::exp(y) / 5.0;
    CHECK(acc == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("zero total volume errors") {
    CHECK_THROWS(features::ratio_transform(day_with_volumes("A", d, {0, 0})));
  }
}

TEST_CASE("zscore") {
  SUBCASE("population std") {
    auto r = features::zscore(std::vector<double>{1, 2, 3});
    CHECK(r.mean == doctest::Approx(2.0));
    CHECK(r.stddev == doctest::Approx(0.816496580927726).epsilon(1e-12));
    CHECK(r.values[0] == doctest::Approx(-1.224744871391589).epsilon(1e-9));
    CHECK(r.values[1] == doctest::Approx(0.0));
    CHECK(r.values[2] == doctest::Approx(1.224744871391589).epsilon(1e-9));
  }
  SUBCASE("degenerate series maps to zeros") {
    auto r = features::zscore(std::vector<double>{5, 5, 5});
    for (double v : r.values) CHECK(v == 0.0);
  }
  SUBCASE("output is standardized") {
    std::vector<double> xs{3.5, -1.25, 7.75, 0.5, 2.25, -4.0, 9.0};
    auto r = features::zscore(xs);
    double mean = 0.0, var = 0.0;
    for (double v : r.values) mean += v;
    mean /= static_cast<double>(r.values.size());
    for (double v : r.values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(r.values.size());
    CHECK(std::abs(mean) < 1e-12);
    CHECK(std::sqrt(var) == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("empty errors") {
    CHECK_THROWS(features::zscore(std::vector<double>{}));
  }
}

TEST_CASE("time encoding") {
  Date mon = Date::parse("2023-01-02");
  auto enc0 = features::time_encoding(0, 390, mon);
  CHECK(enc0[0] == 0.0);
  CHECK(enc0[1] == doctest::Approx(0.0));
  CHECK(enc0[2] == doctest::Approx(1.0));
  CHECK(enc0[3] == 1.0);  // Monday one-hot
  for (int i = 4; i < 8; ++i) CHECK(enc0[i] == 0.0);

  auto mid = features::time_encoding(195, 390, mon);
  CHECK(mid[0] == doctest::Approx(0.5));
  CHECK(mid[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(mid[2] == doctest::Approx(-1.0));

  SUBCASE("periodic dims repeat with period T") {
    auto a = features::time_encoding(17, 390, mon);
    auto b = features::time_encoding(17 + 390, 390, mon);
    CHECK(a[1] == doctest::Approx(b[1]).epsilon(1e-9));
    CHECK(a[2] == doctest::Approx(b[2]).epsilon(1e-9));
  }
  SUBCASE("friday one-hot") {
    auto fri = features::time_encoding(0, 390, Date::parse("2023-01-06"));
    CHECK(fri[7] == 1.0);
  }
}

TEST_CASE("build_windows") {
  Date d1 = Date::parse("2023-01-02");
  const int t = 390;
  std::vector<long long> vols(t, 10);
  vols[5] = 200;  // some variation

  SUBCASE("two days give L - C - H + 1 windows") {
    std::vector<TradingDay> days{day_with_volumes("A", d1, vols), day_with_volumes("A", d1.next_weekday(), vols)};
    auto windows = features::build_windows(days, one_meta("A"), 390, 3);
    CHECK(windows.size() == 388);  // 780 - 390 - 3 + 1
    for (const auto& w : windows) CHECK_NOTHROW(w.check());
  }
  SUBCASE("one day is too short") {
    std::vector<TradingDay> days{day_with_volumes("A", d1, vols)};
    auto windows = features::build_windows(days, one_meta("A"), 390, 3);
    CHECK(windows.empty());
  }
  SUBCASE("normalization uses context stats only and targets line up") {
    std::vector<long long> v2(t, 10);
    std::vector<TradingDay> days{day_with_volumes("A", d1, vols), day_with_volumes("A", d1.next_weekday(), v2)};
    auto windows = features::build_windows(days, one_meta("A"), 390, 3);
    const auto& w0 = windows.front();
    CHECK(w0.first_target_minute == 0);
    CHECK(w0.first_target_date == d1.next_weekday());
    CHECK(w0.target_date == d1.next_weekday());
    // window 0's context is exactly day 1; its stats must not see day 2
    double mean = 0.0;
    for (long long v : vols) mean += static_cast<double>(v);
    mean /= t;
    CHECK(w0.norm_stats.mean[0] == doctest::Approx(mean));
  }
  SUBCASE("deterministic and independent of input day order") {
    std::vector<TradingDay> days{day_with_volumes("A", d1, vols), day_with_volumes("A", d1.next_weekday(), vols)};
    std::vector<TradingDay> reversed{days[1], days[0]};
    auto w1 = features::build_windows(days, one_meta("A"), 200, 2);
    auto w2 = features::build_windows(reversed, one_meta("A"), 200, 2);
    REQUIRE(w1.size() == w2.size());
    for (std::size_t i = 0; i < w1.size(); ++i) {
      CHECK(w1[i].context == w2[i].context);
      CHECK(w1[i].target == w2[i].target);
    }
  }
}

TEST_CASE("split_by_date") {
  Date d1 = Date::parse("2023-01-02");
  std::vector<long long> vols(30, 10);
  std::vector<TradingDay> days;
  Date d = d1;
  for (int i = 0; i < 10; ++i) {
    days.push_back(day_with_volumes("A", d, vols));
    d = d.next_weekday();
  }
  auto windows = features::build_windows(days, one_meta("A"), 30, 3);
  REQUIRE_FALSE(windows.empty());

  SUBCASE("partition respects boundaries inclusively") {
    Date train_end = Date::parse("2023-01-06");
    Date val_end = Date::parse("2023-01-10");
    auto split = features::split_by_date(windows, train_end, val_end);
    CHECK(split.train.size() + split.validation.size() + split.test.size() == windows.size());
    for (const auto& w : split.train) CHECK(w.target_date <= train_end);
    for (const auto& w : split.validation) {
      CHECK(w.target_date > train_end);
      CHECK(w.target_date <= val_end);
    }
    for (const auto& w : split.test) CHECK(w.target_date > val_end);
    // boundary window with last target exactly on train_end stays in train
    bool found_boundary = false;
    for (const auto& w : split.train) found_boundary = found_boundary || w.target_date == train_end;
    CHECK(found_boundary);
  }
  SUBCASE("everything before train_end leaves val and test empty") {
    auto split = features::split_by_date(windows, Date::parse("2030-01-01"), Date::parse("2030-06-01"));
    CHECK(split.validation.empty());
    CHECK(split.test.empty());
    CHECK(split.train.size() == windows.size());
    CHECK(split.warnings.size() == 2);
  }
  SUBCASE("bad boundary order throws") {
    CHECK_THROWS(features::split_by_date(windows, Date::parse("2023-02-01"), Date::parse("2023-01-01")));
  }
}
