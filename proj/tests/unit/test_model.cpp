#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ive/features.hpp"
#include "ive/model.hpp"
#include "ive/rng.hpp"

using namespace ive;
using model::BaselineKind;
using model::ModelConfig;
using model::StudentTParams;

namespace {

// A window filled with seeded noise, dimensionally consistent with cfg.
features::FeatureWindow random_window(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  features::FeatureWindow w;
  w.stock_id = static_cast<int>(rng.uniform_index(cfg.n_stocks));
  w.symbol = "S";
  w.bars_per_day = cfg.context_len;
  w.context_len = cfg.context_len;
  w.horizon = cfg.horizon;
  w.context.resize(static_cast<std::size_t>(cfg.context_len) * cfg.feature_dim);
  for (auto& v : w.context) v = rng.uniform(-1, 1);
  w.time_enc_future.resize(static_cast<std::size_t>(cfg.horizon) * cfg.time_dim);
  for (auto& v : w.time_enc_future) v = rng.uniform(0, 1);
  w.target.resize(cfg.horizon);
  for (auto& v : w.target) v = rng.uniform(-1, 1);
  return w;
}

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.enc_layers = 2;
  cfg.dec_layers = 2;
  cfg.ffn_mult = 2;
  cfg.context_len = 8;
  cfg.horizon = 3;
  cfg.n_stocks = 3;
  cfg.dropout = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("positional encoding") {
  SUBCASE("row zero alternates 0, 1") {
    auto pe = model::positional_encoding(3, 6);
    for (int i = 0; i < 6; i += 2) {
      CHECK(pe[i] == doctest::Approx(0.0));
      CHECK(pe[i + 1] == doctest::Approx(1.0));
    }
  }
  SUBCASE("d=4, p=1 matches the formula") {
    auto pe = model::positional_encoding(2, 4);
    CHECK(pe[4] == doctest::Approx(0.8415).epsilon(1e-4));
    CHECK(pe[5] == doctest::Approx(0.5403).epsilon(1e-4));
    CHECK(pe[6] == doctest::Approx(0.0100).epsilon(1e-3));
    CHECK(pe[7] == doctest::Approx(0.99995).epsilon(1e-5));
  }
  SUBCASE("entries bounded by [-1, 1]") {
    auto pe = model::positional_encoding(64, 10);
    for (double v : pe) {
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
    }
  }
  SUBCASE("odd d_model rejected") {
    CHECK_THROWS(model::positional_encoding(4, 5));
  }
}

TEST_CASE("student-t nll closed forms") {
  SUBCASE("cauchy at the mode") {
    CHECK(model::student_t_nll(StudentTParams{1.0, 0.0, 1.0}, 0.0) == doctest::Approx(std::log(M_PI)).epsilon(1e-9));
  }
  SUBCASE("scale rule") {
    CHECK(model::student_t_nll(StudentTParams{1.0, 0.0, 2.0}, 0.0) ==
          doctest::Approx(std::log(2.0 * M_PI)).epsilon(1e-9));
    // exact: NLL(sigma) - NLL(1) = ln(sigma)
    for (double sigma : {0.5, 2.0, 7.5, 123.0}) {
      const double lhs = model::student_t_nll(StudentTParams{3.0, 0.25, sigma}, 0.25);
      const double rhs = model::student_t_nll(StudentTParams{3.0, 0.25, 1.0}, 0.25) + std::log(sigma);
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
  }
  SUBCASE("normal limit") {
    CHECK(model::student_t_nll(StudentTParams{1e6, 0.0, 1.0}, 0.0) ==
          doctest::Approx(0.5 * std::log(2.0 * M_PI)).epsilon(1e-3));
  }
  SUBCASE("translation consistency is exact on dyadic inputs") {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
      const double x = static_cast<double>(static_cast<int>(rng.uniform_index(2048)) - 1024) / 1024.0;
      const double mu = static_cast<double>(static_cast<int>(rng.uniform_index(2048)) - 1024) / 1024.0;
      const double delta = static_cast<double>(static_cast<int>(rng.uniform_index(128)) - 64) / 64.0;
      StudentTParams p{2.0 + 4.0 * rng.uniform(), mu, 0.5 + rng.uniform()};
      StudentTParams q{p.df, mu + delta, p.scale};
      CHECK(model::student_t_nll(p, x) == model::student_t_nll(q, x + delta));
    }
  }
  SUBCASE("stddev uses the variance formula") {
    StudentTParams p{4.0, 0.0, 0.5};
    CHECK(p.stddev() == doctest::Approx(0.5 * std::sqrt(2.0)).epsilon(1e-12));
    CHECK_THROWS(StudentTParams{1.5, 0.0, 1.0}.stddev());
  }
}

TEST_CASE("greedy and adjusted prediction") {
  // stddev 0.5 at nu=4 means scale = 0.5 / sqrt(2)
  StudentTParams p{4.0, 0.3, 0.5 / std::sqrt(2.0)};
  CHECK(p.stddev() == doctest::Approx(0.5).epsilon(1e-12));
  std::vector<StudentTParams> params{p};
  CHECK(model::greedy_predict(params)[0] == doctest::Approx(0.3));
  CHECK(model::adjusted_predict(p, 0.2, true) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(model::adjusted_predict(p, 0.2, false) == doctest::Approx(0.3));
  CHECK(model::adjusted_predict(p, 0.0, true) == doctest::Approx(0.3));
  // greedy ignores scale and df entirely
  StudentTParams q{77.0, 0.3, 5.0};
  CHECK(model::greedy_predict(std::vector<StudentTParams>{q})[0] == doctest::Approx(0.3));
}

TEST_CASE("forecaster forward contract") {
  ModelConfig cfg = tiny_config();
  model::Forecaster f(cfg, 42);

  SUBCASE("outputs satisfy the link-function floors") {
    for (int trial = 0; trial < 10; ++trial) {
      auto params = f.forward(random_window(cfg, 100 + trial));
      REQUIRE(params.size() == 3);
      for (const auto& p : params) {
        CHECK(p.df > cfg.df_floor);
        CHECK(p.scale > cfg.scale_floor);
        CHECK(std::isfinite(p.stddev()));
      }
    }
  }
  SUBCASE("permuting two context steps changes the output") {
    auto w = random_window(cfg, 7);
    auto base = f.forward(w);
    auto permuted = w;
    for (int k = 0; k < cfg.feature_dim; ++k)
      std::swap(permuted.context[0 * cfg.feature_dim + k], permuted.context[3 * cfg.feature_dim + k]);
    auto out = f.forward(permuted);
    bool differs = false;
    for (std::size_t i = 0; i < base.size(); ++i) differs = differs || base[i].loc != out[i].loc;
    CHECK(differs);
  }
  SUBCASE("same window twice gives identical outputs") {
    auto w = random_window(cfg, 8);
    auto a = f.forward(w);
    auto b = f.forward(w);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].df == b[i].df);
      CHECK(a[i].loc == b[i].loc);
      CHECK(a[i].scale == b[i].scale);
    }
  }
  SUBCASE("causal masking: later target time encodings leave earlier steps unchanged") {
    auto w = random_window(cfg, 9);
    auto base = f.forward(w);
    auto poked = w;
    for (int k = 0; k < cfg.time_dim; ++k) poked.time_enc_future[2 * cfg.time_dim + k] += 0.37;
    auto out = f.forward(poked);
    CHECK(out[0].loc == base[0].loc);
    CHECK(out[0].scale == base[0].scale);
    CHECK(out[1].loc == base[1].loc);
    CHECK(out[2].loc != base[2].loc);
  }
  SUBCASE("window dim mismatch throws") {
    ModelConfig other = cfg;
    other.context_len = 12;
    CHECK_THROWS(f.forward(random_window(other, 1)));
  }
  SUBCASE("tape loss equals closed-form nll of the forward outputs") {
    auto w = random_window(cfg, 10);
    auto params = f.forward(w);
    num::Tape tape;
    const double tape_nll = f.loss(tape, w, nullptr).scalar();
    CHECK(tape_nll == doctest::Approx(model::student_t_nll(params, w.target)).epsilon(1e-12));
  }
  SUBCASE("zeroed head yields the link-function baselines") {
    model::Forecaster zeroed(cfg, 43);
    for (auto* p : zeroed.parameters()) {
      if (p->name == "head.w" || p->name == "head.b") std::fill(p->value.begin(), p->value.end(), 0.0);
    }
    const double softplus0 = std::log(2.0);
    auto params = zeroed.forward(random_window(cfg, 11));
    for (const auto& p : params) {
      CHECK(p.loc == 0.0);
      CHECK(p.df == doctest::Approx(cfg.df_floor + softplus0).epsilon(1e-12));
      CHECK(p.scale == doctest::Approx(cfg.scale_floor + softplus0).epsilon(1e-12));
    }
  }
}

TEST_CASE("head link functions keep the distribution valid under extreme raw values") {
  Rng rng(23);
  for (int trial = 0; trial < 1000; ++trial) {
    const double raw = rng.uniform(-50, 50);
    const double nu = model::link_df(raw, 2.0);
    const double sigma = model::link_scale(raw, 1e-4);
    CHECK(nu > 2.0);
    CHECK(sigma > 0.0);
    CHECK(std::isfinite(sigma * std::sqrt(nu / (nu - 2.0))));
  }
  // hit the extremes exactly, not just by sampling
  for (double raw : {-50.0, -45.5, 50.0}) {
    CHECK(model::link_df(raw, 2.0) > 2.0);
    CHECK(std::isfinite(model::link_df(raw, 2.0) / (model::link_df(raw, 2.0) - 2.0)));
  }
}

TEST_CASE("micro transformer gradient check") {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.enc_layers = 1;
  cfg.dec_layers = 1;
  cfg.ffn_mult = 2;
  cfg.context_len = 5;
  cfg.horizon = 2;
  cfg.n_stocks = 2;
  cfg.dropout = 0.0;
  model::Forecaster f(cfg, 3);
  auto w = random_window(cfg, 4);
  auto params = f.parameters();
  auto build = [&](num::Tape& t) { return f.loss(t, w, nullptr); };
  CHECK(num::grad_check(build, params, 1e-4) < 1e-3);
}

TEST_CASE("baselines") {
  ModelConfig cfg = tiny_config();

  SUBCASE("zero weights give zero outputs") {
    model::Baseline b(BaselineKind::LSTM_HR, cfg, 1);
    for (auto* p : b.parameters()) std::fill(p->value.begin(), p->value.end(), 0.0);
    auto out = b.point_forecast(random_window(cfg, 2));
    for (double v : out) CHECK(v == 0.0);
  }
  SUBCASE("distinct cells differ on the same input") {
    model::Baseline rnn(BaselineKind::RNN_HR, cfg, 5);
    model::Baseline lstm(BaselineKind::LSTM_HR, cfg, 5);
    auto w = random_window(cfg, 6);
    CHECK(rnn.point_forecast(w) != lstm.point_forecast(w));
  }
  SUBCASE("bilstm consumes both directions") {
    model::Baseline bi(BaselineKind::BILSTM_HR, cfg, 7);
    auto w = random_window(cfg, 8);
    auto base = bi.point_forecast(w);
    auto flipped = w;
    for (int k = 0; k < cfg.feature_dim; ++k)
      std::swap(flipped.context[0 * cfg.feature_dim + k],
                flipped.context[static_cast<std::size_t>(cfg.context_len - 1) * cfg.feature_dim + k]);
    CHECK(bi.point_forecast(flipped) != base);
  }
  SUBCASE("gradient check per baseline") {
    ModelConfig small = cfg;
    small.d_model = 6;
    small.context_len = 4;
    for (auto kind : {BaselineKind::RNN_HR, BaselineKind::LSTM_HR, BaselineKind::BILSTM_HR}) {
      model::Baseline b(kind, small, 11);
      auto w = random_window(small, 12);
      auto params = b.parameters();
      auto build = [&](num::Tape& t) { return b.loss(t, w, nullptr); };
      CHECK(num::grad_check(build, params, 1e-4) < 1e-4);
    }
  }
}

TEST_CASE("checkpoint round trip") {
  auto dir = std::filesystem::temp_directory_path() / "ive_ckpt_test";
  std::filesystem::create_directories(dir);
  ModelConfig cfg = tiny_config();
  auto w = random_window(cfg, 31);

  SUBCASE("forecaster save/load/forward is bit identical") {
    model::Forecaster f(cfg, 99);
    auto before = f.forward(w);
    const auto path = (dir / "f.ckpt").string();
    model::save_checkpoint(path, f);
    auto loaded = model::load_model(path);
    CHECK(loaded->kind() == "ive");
    auto after = dynamic_cast<model::Forecaster&>(*loaded).forward(w);
    for (std::size_t i = 0; i < before.size(); ++i) {
      CHECK(before[i].df == after[i].df);
      CHECK(before[i].loc == after[i].loc);
      CHECK(before[i].scale == after[i].scale);
    }
  }
  SUBCASE("baseline save/load keeps kind and outputs") {
    model::Baseline b(BaselineKind::BILSTM_HR, cfg, 100);
    const auto path = (dir / "b.ckpt").string();
    model::save_checkpoint(path, b);
    auto loaded = model::load_model(path);
    CHECK(loaded->kind() == "bilstm-hr");
    CHECK(loaded->point_forecast(w) == b.point_forecast(w));
  }
  SUBCASE("corrupt magic is rejected") {
    const auto path = (dir / "junk.ckpt").string();
    std::ofstream(path) << "not a checkpoint";
    CHECK_THROWS(model::load_model(path));
  }
}
