#include <doctest.h>

#include <cmath>
#include <limits>

#include "ive/features.hpp"
#include "ive/marketdata.hpp"
#include "ive/model.hpp"
#include "ive/rng.hpp"
#include "ive/training.hpp"

using namespace ive;
using num::Parameter;
using training::AdamWState;
using training::OptimConfig;

namespace {

// Plain Adam coded independently of adamw_step, for the oracle-equivalence
// test (weight decay off).
struct AdamOracle {
  double lr, b1, b2, eps;
  std::vector<double> m, v;
  long t = 0;

  AdamOracle(double lr_, double b1_, double b2_, double eps_, std::size_t n)
      : lr(lr_), b1(b1_), b2(b2_), eps(eps_), m(n, 0.0), v(n, 0.0) {}

  void step(std::vector<double>& theta, const std::vector<double>& g) {
    ++t;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mhat = m[i] / (1 - std::pow(b1, t));
      const double vhat = v[i] / (1 - std::pow(b2, t));
      theta[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
};

features::DatasetSplit tiny_split(int n_stocks, int n_days, int bars, int context, int horizon,
                                  const data::Date& train_end, const data::Date& val_end, std::uint64_t seed) {
  data::SyntheticConfig cfg;
  cfg.n_stocks = n_stocks;
  cfg.n_days = n_days;
  cfg.bars_per_day = bars;
  cfg.seed = seed;
  auto synth = data::generate_synthetic(cfg);
  auto windows = features::build_windows(synth.days, synth.meta, context, horizon);
  return features::split_by_date(std::move(windows), train_end, val_end);
}

}  // namespace

TEST_CASE("adamw single step arithmetic") {
  Parameter theta("theta", {1});
  theta.value[0] = 1.0;
  theta.grad[0] = 1.0;
  std::vector<Parameter*> params{&theta};
  AdamWState state;
  OptimConfig cfg;
  cfg.lr = 3e-4;
  cfg.weight_decay = 0.01;
  training::adamw_step(params, state, cfg);
  // m-hat = 1, v-hat = 1: theta = 1 - lr/(1+eps) - lr*wd
  CHECK(theta.value[0] == doctest::Approx(0.999697).epsilon(1e-6));
}

TEST_CASE("adamw zero gradient with zero decay leaves parameters unchanged") {
  Parameter theta("theta", {3});
  theta.value = {1.0, -2.0, 0.5};
  theta.zero_grad();
  std::vector<Parameter*> params{&theta};
  AdamWState state;
  OptimConfig cfg;
  cfg.weight_decay = 0.0;
  training::adamw_step(params, state, cfg);
  CHECK(theta.value[0] == 1.0);
  CHECK(theta.value[1] == -2.0);
  CHECK(theta.value[2] == 0.5);
}

TEST_CASE("adamw with wd=0 matches an independent adam oracle") {
  Rng rng(5);
  Parameter p("p", {7});
  std::vector<double> shadow(7);
  for (int i = 0; i < 7; ++i) {
    p.value[i] = rng.uniform(-1, 1);
    shadow[i] = p.value[i];
  }
  std::vector<Parameter*> params{&p};
  AdamWState state;
  OptimConfig cfg;
  cfg.lr = 1e-2;
  cfg.weight_decay = 0.0;
  AdamOracle oracle(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, 7);

  for (int step = 0; step < 10; ++step) {
    std::vector<double> g(7);
    for (int i = 0; i < 7; ++i) g[i] = rng.uniform(-2, 2);
    p.grad = g;
    training::adamw_step(params, state, cfg);
    oracle.step(shadow, g);
    for (int i = 0; i < 7; ++i) CHECK(p.value[i] == doctest::Approx(shadow[i]).epsilon(1e-12));
  }
}

TEST_CASE("one adamw step decreases a random convex quadratic") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 4;
    std::vector<double> a(n), target(n);
    for (int i = 0; i < n; ++i) {
      a[i] = 0.5 + 2.0 * rng.uniform();  // positive curvature
      target[i] = rng.uniform(-3, 3);
    }
    Parameter theta("theta", {n});
    for (int i = 0; i < n; ++i) theta.value[i] = target[i] + (rng.uniform() < 0.5 ? -1 : 1) * (0.5 + rng.uniform());
    auto loss = [&]() {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += a[i] * (theta.value[i] - target[i]) * (theta.value[i] - target[i]);
      return acc;
    };
    const double before = loss();
    for (int i = 0; i < n; ++i) theta.grad[i] = 2.0 * a[i] * (theta.value[i] - target[i]);
    std::vector<Parameter*> params{&theta};
    AdamWState state;
    OptimConfig cfg;
    cfg.lr = 1e-3;
    cfg.weight_decay = 0.0;
    training::adamw_step(params, state, cfg);
    CHECK(loss() < before);
  }
}

namespace {

// Stub pinning predictions to zero: metrics reduce to target statistics.
struct ZeroModel : model::TrainableModel {
  model::ModelConfig cfg;
  explicit ZeroModel(model::ModelConfig c) : cfg(std::move(c)) {}
  num::Tensor loss(num::Tape& t, const features::FeatureWindow&, Rng*) override { return t.scalar_const(0.0); }
  std::vector<double> point_forecast(const features::FeatureWindow&) override { return {0.0, 0.0, 0.0}; }
  std::vector<num::Parameter*> parameters() override { return {}; }
  const model::ModelConfig& config() const override { return cfg; }
  std::string kind() const override { return "zero"; }
};

struct EchoModel : ZeroModel {
  using ZeroModel::ZeroModel;
  std::vector<double> point_forecast(const features::FeatureWindow& win) override { return win.target; }
};

}  // namespace

TEST_CASE("evaluate metrics") {
  model::ModelConfig mc;
  mc.context_len = 10;
  mc.horizon = 3;
  ZeroModel zero(mc);

  features::FeatureWindow w;
  w.context_len = 10;
  w.horizon = 3;
  w.bars_per_day = 10;
  w.target = {3.0, 0.0, 0.0};
  features::FeatureWindow w2 = w;
  w2.target = {4.0, 0.0, 0.0};
  std::vector<features::FeatureWindow> windows{w, w2};

  auto m = training::evaluate(zero, windows);
  CHECK(m.rmse == doctest::Approx(3.5355339).epsilon(1e-6));
  CHECK(m.mae == doctest::Approx(3.5));
  CHECK(m.rmse >= m.mae);

  SUBCASE("exact predictions give zero error") {
    EchoModel echo(mc);
    auto exact = training::evaluate(echo, windows);
    CHECK(exact.rmse == 0.0);
    CHECK(exact.mae == 0.0);
  }
  SUBCASE("permutation invariance") {
    std::vector<features::FeatureWindow> swapped{w2, w};
    auto a = training::evaluate(zero, windows);
    auto b = training::evaluate(zero, swapped);
    CHECK(a.rmse == b.rmse);
    CHECK(a.mae == b.mae);
  }
}

TEST_CASE("training loop determinism and improvement") {
  auto split = tiny_split(1, 4, 24, 24, 3, data::Date::parse("2023-01-04"), data::Date::parse("2023-01-05"), 77);
  REQUIRE_FALSE(split.train.empty());

  model::ModelConfig mc;
  mc.d_model = 16;
  mc.n_heads = 2;
  mc.enc_layers = 1;
  mc.dec_layers = 1;
  mc.ffn_mult = 2;
  mc.context_len = 24;
  mc.horizon = 3;
  mc.n_stocks = 1;
  mc.dropout = 0.1;

  OptimConfig oc;
  oc.lr = 3e-3;
  oc.max_steps = 60;
  oc.batch_size = 8;
  oc.eval_every = 20;

  SUBCASE("same seed gives identical loss curves") {
    model::Forecaster m1(mc, 5);
    model::Forecaster m2(mc, 5);
    auto r1 = training::train(m1, split, oc, 123);
    auto r2 = training::train(m2, split, oc, 123);
    CHECK(r1.train_loss == r2.train_loss);
    CHECK(r1.val_loss == r2.val_loss);
  }
  SUBCASE("loss drops on a learnable problem") {
    model::Forecaster m(mc, 6);
    auto r = training::train(m, split, oc, 9);
    REQUIRE(r.train_loss.size() >= 20);
    double early = 0.0, late = 0.0;
    for (int i = 0; i < 10; ++i) early += r.train_loss[i];
    for (int i = 0; i < 10; ++i) late += r.train_loss[r.train_loss.size() - 1 - i];
    CHECK(late < early);
  }
  SUBCASE("deterministic parallel reduction matches single thread closely") {
    model::Forecaster m1(mc, 5);
    model::Forecaster m2(mc, 5);
    OptimConfig short_oc = oc;
    short_oc.max_steps = 10;
    auto r1 = training::train(m1, split, short_oc, 123, 1);
    auto r2 = training::train(m2, split, short_oc, 123, 3);
    REQUIRE(r1.train_loss.size() == r2.train_loss.size());
    for (std::size_t i = 0; i < r1.train_loss.size(); ++i)
      CHECK(r1.train_loss[i] == doctest::Approx(r2.train_loss[i]).epsilon(1e-9));
    // two threaded runs are identical to each other
    model::Forecaster m3(mc, 5);
    auto r3 = training::train(m3, split, short_oc, 123, 3);
    CHECK(r2.train_loss == r3.train_loss);
  }
  SUBCASE("empty training set throws") {
    features::DatasetSplit empty;
    model::Forecaster m(mc, 5);
    CHECK_THROWS(training::train(m, empty, oc, 1));
  }
  SUBCASE("non-finite loss aborts with a diagnostic") {
    struct NanModel : model::TrainableModel {
      model::ModelConfig cfg;
      explicit NanModel(model::ModelConfig c) : cfg(std::move(c)) {}
      num::Tensor loss(num::Tape& t, const features::FeatureWindow&, Rng*) override {
        return t.scalar_const(std::numeric_limits<double>::quiet_NaN());
      }
      std::vector<double> point_forecast(const features::FeatureWindow&) override { return {0, 0, 0}; }
      std::vector<num::Parameter*> parameters() override { return {}; }
      const model::ModelConfig& config() const override { return cfg; }
      std::string kind() const override { return "nan"; }
    } nan_model(mc);
    try {
      training::train(nan_model, split, oc, 1);
      FAIL("expected throw");
    } catch (const std::exception& e) {
      CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
    }
  }
}

TEST_CASE("shuffled-target control stays near the constant predictor") {
  auto split = tiny_split(1, 5, 20, 20, 2, data::Date::parse("2023-01-05"), data::Date::parse("2023-01-06"), 31);
  REQUIRE_FALSE(split.train.empty());
  REQUIRE_FALSE(split.validation.empty());

  // Destroy the context-target relationship by shuffling targets across
  // training windows.
  Rng rng(404);
  std::vector<std::size_t> perm(split.train.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  rng.shuffle(perm);
  auto shuffled = split;
  for (std::size_t i = 0; i < perm.size(); ++i) shuffled.train[i].target = split.train[perm[i]].target;

  model::ModelConfig mc;
  mc.d_model = 16;
  mc.n_heads = 2;
  mc.enc_layers = 1;
  mc.dec_layers = 1;
  mc.ffn_mult = 2;
  mc.context_len = 20;
  mc.horizon = 2;
  mc.n_stocks = 1;
  mc.dropout = 0.0;

  OptimConfig oc;
  oc.lr = 1e-3;
  oc.max_steps = 150;
  oc.batch_size = 8;
  oc.eval_every = 50;

  model::Forecaster m(mc, 17);
  training::train(m, shuffled, oc, 55);
  const double model_val_nll = training::mean_loss(m, split.validation);

  // Constant-predictor oracle: one Student-t (3 free parameters) fitted to
  // the same shuffled training targets with the same optimizer budget.
  struct ConstModel : model::TrainableModel {
    model::ModelConfig cfg;
    num::Parameter raw{"raw", {1, 3}};  // (raw_nu, mu, raw_sigma)
    explicit ConstModel(model::ModelConfig c) : cfg(std::move(c)) {}
    num::Tensor loss(num::Tape& t, const features::FeatureWindow& w, Rng*) override {
      num::Tensor r = t.leaf(raw);
      num::Tensor nu = t.add_const(t.softplus(t.slice_cols(r, 0, 1)), 2.0);
      num::Tensor mu = t.slice_cols(r, 1, 1);
      num::Tensor sigma = t.add_const(t.softplus(t.slice_cols(r, 2, 1)), 1e-4);
      num::Tensor nll = t.scalar_const(0.0);
      for (double x : w.target) {
        num::Tensor z = t.div(t.sub(t.scalar_const(x), t.reshape(mu, {1})), t.reshape(sigma, {1}));
        num::Tensor nu1 = t.reshape(nu, {1});
        num::Tensor nu_p1_half = t.scale(t.add_const(nu1, 1.0), 0.5);
        num::Tensor term =
            t.add(t.add(t.add(t.neg(t.sub(t.lgamma(nu_p1_half), t.lgamma(t.scale(nu1, 0.5)))),
                              t.scale(t.log(t.scale(nu1, M_PI)), 0.5)),
                        t.log(t.reshape(sigma, {1}))),
                  t.mul(nu_p1_half, t.log(t.add_const(t.div(t.square(z), nu1), 1.0))));
        nll = t.add(nll, term);
      }
      return t.scale(nll, 1.0 / static_cast<double>(w.target.size()));
    }
    std::vector<double> point_forecast(const features::FeatureWindow&) override {
      return std::vector<double>(cfg.horizon, raw.value[1]);
    }
    std::vector<num::Parameter*> parameters() override { return {&raw}; }
    const model::ModelConfig& config() const override { return cfg; }
    std::string kind() const override { return "const"; }
  } constant(mc);

  training::train(constant, shuffled, oc, 55);
  const double const_val_nll = training::mean_loss(constant, split.validation);

  CHECK(model_val_nll >= const_val_nll - 0.01);
}
