// ive — volume-ratio forecasting and VWAP execution research CLI.
//
// Subcommands: synth, train, eval, backtest, spike-analysis, perf-regression.
// Every run is driven by one JSON config file plus a few overriding flags and
// writes its fully resolved config next to its outputs. With --threads 1 the
// outputs are byte-reproducible for a fixed seed and config.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "ive/analysis.hpp"
#include "ive/execsim.hpp"
#include "ive/features.hpp"
#include "ive/marketdata.hpp"
#include "ive/model.hpp"
#include "ive/pipeline.hpp"
#include "ive/training.hpp"

using nlohmann::json;
namespace fs = std::filesystem;
using namespace ive;

namespace {

// ---------------------------------------------------------------------------
// Config plumbing
// ---------------------------------------------------------------------------

struct RunContext {
  json config;                    // fully resolved
  fs::path out_dir;
  std::uint64_t seed = 1;
  int threads = 1;
  std::vector<fs::path> written;  // removed again if the run fails

  fs::path declare(const std::string& name) {
    fs::path p = out_dir / name;
    written.push_back(p);
    return p;
  }
};

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  if (j.contains(key)) return j.at(key).get<T>();
  return fallback;
}

json section(const json& j, const std::string& key) {
  return j.contains(key) ? j.at(key) : json::object();
}

data::SyntheticConfig synth_config(const json& j, std::uint64_t seed) {
  data::SyntheticConfig cfg;
  cfg.n_stocks = get_or(j, "n_stocks", cfg.n_stocks);
  cfg.n_days = get_or(j, "n_days", cfg.n_days);
  cfg.bars_per_day = get_or(j, "bars_per_day", cfg.bars_per_day);
  cfg.u_shape_depth = get_or(j, "u_shape_depth", cfg.u_shape_depth);
  cfg.noise_sigma = get_or(j, "noise_sigma", cfg.noise_sigma);
  cfg.spike_rate = get_or(j, "spike_rate", cfg.spike_rate);
  cfg.spike_scale = get_or(j, "spike_scale", cfg.spike_scale);
  cfg.price_vol = get_or(j, "price_vol", cfg.price_vol);
  cfg.seed = seed;
  return cfg;
}

model::ModelConfig model_config(const json& j, int context_len, int horizon, int n_stocks) {
  model::ModelConfig cfg;
  cfg.d_model = get_or(j, "d_model", cfg.d_model);
  cfg.n_heads = get_or(j, "n_heads", cfg.n_heads);
  cfg.enc_layers = get_or(j, "enc_layers", cfg.enc_layers);
  cfg.dec_layers = get_or(j, "dec_layers", cfg.dec_layers);
  cfg.ffn_mult = get_or(j, "ffn_mult", cfg.ffn_mult);
  cfg.dropout = get_or(j, "dropout", cfg.dropout);
  cfg.df_floor = get_or(j, "df_floor", cfg.df_floor);
  cfg.scale_floor = get_or(j, "scale_floor", cfg.scale_floor);
  cfg.context_len = context_len;
  cfg.horizon = horizon;
  cfg.n_stocks = n_stocks;
  return cfg;
}

json model_config_json(const model::ModelConfig& cfg, const std::string& kind) {
  return json{{"kind", kind},
              {"d_model", cfg.d_model},
              {"n_heads", cfg.n_heads},
              {"enc_layers", cfg.enc_layers},
              {"dec_layers", cfg.dec_layers},
              {"ffn_mult", cfg.ffn_mult},
              {"dropout", cfg.dropout},
              {"df_floor", cfg.df_floor},
              {"scale_floor", cfg.scale_floor},
              {"context_len", cfg.context_len},
              {"horizon", cfg.horizon},
              {"n_stocks", cfg.n_stocks}};
}

training::OptimConfig optim_config(const json& j) {
  training::OptimConfig cfg;
  cfg.lr = get_or(j, "lr", cfg.lr);
  cfg.beta1 = get_or(j, "beta1", cfg.beta1);
  cfg.beta2 = get_or(j, "beta2", cfg.beta2);
  cfg.eps = get_or(j, "eps", cfg.eps);
  cfg.weight_decay = get_or(j, "weight_decay", cfg.weight_decay);
  cfg.max_steps = get_or(j, "max_steps", cfg.max_steps);
  cfg.batch_size = get_or(j, "batch_size", cfg.batch_size);
  cfg.grad_clip = get_or(j, "grad_clip", cfg.grad_clip);
  cfg.eval_every = get_or(j, "eval_every", cfg.eval_every);
  cfg.patience = get_or(j, "patience", cfg.patience);
  cfg.target_train_mae = get_or(j, "target_train_mae", cfg.target_train_mae);
  return cfg;
}

json optim_config_json(const training::OptimConfig& cfg) {
  return json{{"lr", cfg.lr},
              {"beta1", cfg.beta1},
              {"beta2", cfg.beta2},
              {"eps", cfg.eps},
              {"weight_decay", cfg.weight_decay},
              {"max_steps", cfg.max_steps},
              {"batch_size", cfg.batch_size},
              {"grad_clip", cfg.grad_clip},
              {"eval_every", cfg.eval_every},
              {"patience", cfg.patience},
              {"target_train_mae", cfg.target_train_mae}};
}

execsim::FillModelConfig fill_config(const json& j) {
  execsim::FillModelConfig cfg;
  cfg.participation_cap = get_or(j, "participation_cap", cfg.participation_cap);
  cfg.market_slippage_bp = get_or(j, "market_slippage_bp", cfg.market_slippage_bp);
  cfg.tick = get_or(j, "tick", cfg.tick);
  return cfg;
}

json fill_config_json(const execsim::FillModelConfig& cfg) {
  return json{{"participation_cap", cfg.participation_cap},
              {"market_slippage_bp", cfg.market_slippage_bp},
              {"tick", cfg.tick}};
}

struct LoadedData {
  std::vector<data::TradingDay> days;
  data::MetaTable meta;
  int bars_per_day = 390;
};

LoadedData load_data(const json& data_cfg, std::uint64_t seed) {
  LoadedData out;
  if (data_cfg.contains("synthetic")) {
    auto cfg = synth_config(data_cfg.at("synthetic"), seed);
    auto synth = data::generate_synthetic(cfg);
    out.days = std::move(synth.days);
    out.meta = std::move(synth.meta);
    out.bars_per_day = cfg.bars_per_day;
    return out;
  }
  if (!data_cfg.contains("bars") || !data_cfg.contains("meta"))
    throw std::runtime_error("config: data section needs either 'synthetic' or 'bars' + 'meta' paths");
  out.bars_per_day = get_or(data_cfg, "bars_per_day", 390);
  out.meta = data::load_meta(data_cfg.at("meta").get<std::string>());
  auto loaded = data::load_minute_bars(data_cfg.at("bars").get<std::string>(), out.meta, out.bars_per_day);
  for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << "\n";
  out.days = std::move(loaded.days);
  return out;
}

struct SplitDates {
  data::Date train_end;
  data::Date val_end;
};

SplitDates split_dates(const json& j) {
  if (!j.contains("train_end") || !j.contains("val_end"))
    throw std::runtime_error("config: split section needs 'train_end' and 'val_end' dates");
  return SplitDates{data::Date::parse(j.at("train_end").get<std::string>()),
                    data::Date::parse(j.at("val_end").get<std::string>())};
}

void write_text(RunContext& ctx, const std::string& name, const std::string& text) {
  const fs::path p = ctx.declare(name);
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + p.string() + "'");
}

void write_json(RunContext& ctx, const std::string& name, const json& j) { write_text(ctx, name, j.dump(2) + "\n"); }

void write_resolved_config(RunContext& ctx) { write_json(ctx, "resolved_config.json", ctx.config); }

json dist_stats_json(const execsim::DistStats& s) {
  return json{{"n", s.n},
              {"mean_bp", s.mean_bp},
              {"median_bp", s.median_bp},
              {"std_bp", s.std_bp},
              {"beat_ratio", s.beat_ratio},
              {"top20_mean_bp", s.top20_mean},
              {"bottom20_mean_bp", s.bottom20_mean}};
}

json summary_json(const execsim::Summary& s) {
  return json{{"all", dist_stats_json(s.all)},
              {"buy", dist_stats_json(s.buy)},
              {"sell", dist_stats_json(s.sell)},
              {"n_undefined", s.n_undefined}};
}

json ols_json(const analysis::OLSResult& r) {
  json terms = json::array();
  for (const auto& t : r.terms)
    terms.push_back(json{{"name", t.name},
                         {"coefficient", t.coefficient},
                         {"std_error", t.std_error},
                         {"t_stat", t.t_stat},
                         {"p_value", t.p_value}});
  return json{{"terms", terms}, {"r_squared", r.r_squared}, {"f_stat", r.f_stat}, {"n", r.n}, {"dof", r.dof}};
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_synth(RunContext& ctx) {
  const json data_cfg = section(ctx.config, "data");
  if (!data_cfg.contains("synthetic")) throw std::runtime_error("synth: config needs data.synthetic");
  const auto cfg = synth_config(data_cfg.at("synthetic"), ctx.seed);
  auto synth = data::generate_synthetic(cfg);

  data::write_minute_bars(ctx.declare("bars.csv").string(), synth.days);
  data::write_meta(ctx.declare("meta.csv").string(), synth.meta);
  {
    std::ofstream out(ctx.declare("spikes.csv"));
    out << "symbol,date,minute,multiplier\n";
    char buf[128];
    for (const auto& s : synth.spikes) {
      std::snprintf(buf, sizeof(buf), "%s,%s,%d,%.17g\n", s.symbol.c_str(), s.date.str().c_str(), s.minute,
                    s.multiplier);
      out << buf;
    }
  }
  write_resolved_config(ctx);
  std::cout << "synth: " << synth.days.size() << " stock-days, " << synth.spikes.size() << " spikes -> "
            << ctx.out_dir.string() << "\n";
  return 0;
}

int cmd_train(RunContext& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  auto loaded = load_data(section(ctx.config, "data"), ctx.seed);
  const json feat = section(ctx.config, "features");
  const int context_len = get_or(feat, "context_len", loaded.bars_per_day);
  const int horizon = get_or(feat, "horizon", 3);
  auto windows = features::build_windows(loaded.days, loaded.meta, context_len, horizon);
  const auto dates = split_dates(section(ctx.config, "split"));
  auto split = features::split_by_date(std::move(windows), dates.train_end, dates.val_end);
  for (const auto& w : split.warnings) std::cerr << "warning: " << w << "\n";

  const int n_stocks = static_cast<int>(features::stock_vocabulary(loaded.days).size());
  const json model_cfg_in = section(ctx.config, "model");
  const std::string kind = get_or<std::string>(model_cfg_in, "kind", "ive");
  const auto mc = model_config(model_cfg_in, context_len, horizon, n_stocks);

  std::unique_ptr<model::TrainableModel> m;
  if (kind == "ive") {
    m = std::make_unique<model::Forecaster>(mc, mix_seed(ctx.seed, 0x696E6974ull));
  } else {
    m = std::make_unique<model::Baseline>(model::parse_baseline(kind), mc, mix_seed(ctx.seed, 0x696E6974ull));
  }

  const auto oc = optim_config(section(ctx.config, "optim"));
  auto report = training::train(*m, split, oc, ctx.seed, ctx.threads);

  model::save_checkpoint(ctx.declare("model.ckpt").string(), *m);

  json rj{{"kind", kind},
          {"seed", ctx.seed},
          {"steps_run", report.steps_run},
          {"train_loss", report.train_loss},
          {"val_loss", report.val_loss},
          {"best_step", report.best_step},
          {"best_val_loss", report.best_val_loss}};
  if (report.has_test_metrics) {
    rj["test_rmse"] = report.final_rmse;
    rj["test_mae"] = report.final_mae;
  }
  write_json(ctx, "report.json", rj);

  ctx.config["model"] = model_config_json(mc, kind);
  ctx.config["optim"] = optim_config_json(oc);
  write_resolved_config(ctx);

  // Wall clock stays on stderr: output artifacts must be byte-reproducible.
  std::cerr << "train: wall clock " << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
            << "s\n";
  std::cout << "train: " << kind << " for " << report.steps_run << " steps, final train loss "
            << (report.train_loss.empty() ? 0.0 : report.train_loss.back()) << " -> " << ctx.out_dir.string() << "\n";
  return 0;
}

int cmd_eval(RunContext& ctx) {
  auto loaded = load_data(section(ctx.config, "data"), ctx.seed);
  const json feat = section(ctx.config, "features");
  const int context_len = get_or(feat, "context_len", loaded.bars_per_day);
  const int horizon = get_or(feat, "horizon", 3);
  auto windows = features::build_windows(loaded.days, loaded.meta, context_len, horizon);
  const auto dates = split_dates(section(ctx.config, "split"));
  auto split = features::split_by_date(std::move(windows), dates.train_end, dates.val_end);

  const json eval_cfg = section(ctx.config, "eval");
  if (!eval_cfg.contains("checkpoints")) throw std::runtime_error("eval: config needs eval.checkpoints");
  const std::string partition = get_or<std::string>(eval_cfg, "partition", "test");
  const std::vector<features::FeatureWindow>* windows_for_eval = nullptr;
  if (partition == "test") {
    windows_for_eval = &split.test;
  } else if (partition == "validation") {
    windows_for_eval = &split.validation;
  } else if (partition == "train") {
    windows_for_eval = &split.train;
  } else {
    throw std::runtime_error("eval: partition must be train, validation or test");
  }
  if (windows_for_eval->empty()) throw std::runtime_error("eval: " + partition + " partition is empty");

  // Canonical table order, one row per provided checkpoint.
  const std::vector<std::pair<std::string, std::string>> display{
      {"rnn-hr", "RNN-HR"}, {"lstm-hr", "LSTM-HR"}, {"bilstm-hr", "BiLSTM-HR"}, {"ive", "IVE"}};
  std::map<std::string, training::Metrics> metrics;
  for (const auto& entry : eval_cfg.at("checkpoints")) {
    auto m = model::load_model(entry.get<std::string>());
    if (m->config().context_len != context_len || m->config().horizon != horizon)
      throw std::runtime_error("eval: checkpoint dims do not match the features config");
    metrics[m->kind()] = training::evaluate(*m, *windows_for_eval);
  }

  std::string csv = "model,rmse,mae\n";
  char buf[128];
  for (const auto& [kind, name] : display) {
    auto it = metrics.find(kind);
    if (it == metrics.end()) continue;
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f\n", name.c_str(), it->second.rmse, it->second.mae);
    csv += buf;
  }
  write_text(ctx, "eval.csv", csv);
  write_resolved_config(ctx);
  std::cout << csv;
  return 0;
}

// Curves for the complete days strictly after val_end, plus gate history
// from the days at or before it when requested.
struct BacktestCurves {
  std::map<pipeline::CurveKey, pipeline::PredictedCurve> test;
  analysis::SpikeGateHistory history;
};

BacktestCurves backtest_curves(RunContext& ctx, model::TrainableModel& m,
                               const std::vector<features::FeatureWindow>& windows, const data::Date& val_end,
                               bool spike_adjust) {
  std::vector<features::FeatureWindow> test_windows, hist_windows;
  for (const auto& w : windows) {
    if (w.first_target_date > val_end) {
      test_windows.push_back(w);
    } else if (spike_adjust) {
      hist_windows.push_back(w);
    }
  }
  BacktestCurves out;
  out.test = pipeline::predict_curves(m, test_windows, ctx.threads);
  if (spike_adjust) {
    auto hist_curves = pipeline::predict_curves(m, hist_windows, ctx.threads);
    auto series = pipeline::collect_spike_series(hist_curves, true);
    out.history = analysis::SpikeGateHistory::from_diffs(series.d_std, series.d_ratio);
  }
  return out;
}

int cmd_backtest(RunContext& ctx) {
  auto loaded = load_data(section(ctx.config, "data"), ctx.seed);
  const json feat = section(ctx.config, "features");
  const int context_len = get_or(feat, "context_len", loaded.bars_per_day);
  const int horizon = get_or(feat, "horizon", 3);
  const auto dates = split_dates(section(ctx.config, "split"));

  const json bt = section(ctx.config, "backtest");
  if (!bt.contains("checkpoint")) throw std::runtime_error("backtest: config needs backtest.checkpoint");
  auto m = model::load_model(bt.at("checkpoint").get<std::string>());
  if (m->config().context_len != context_len || m->config().horizon != horizon)
    throw std::runtime_error("backtest: checkpoint dims do not match the features config");

  pipeline::PlanOptions opts;
  opts.total_qty = get_or<long long>(bt, "total_qty", 10000);
  opts.spike_adjust = get_or(bt, "spike_adjust", false);
  opts.spike_c = get_or(bt, "spike_c", 0.2);
  std::vector<execsim::Side> sides;
  for (const auto& s : bt.contains("sides") ? bt.at("sides") : json::array({"BUY", "SELL"}))
    sides.push_back(execsim::parse_side(s.get<std::string>()));
  const auto fill = fill_config(section(ctx.config, "fill"));

  auto windows = features::build_windows(loaded.days, loaded.meta, context_len, horizon);
  auto curves = backtest_curves(ctx, *m, windows, dates.val_end, opts.spike_adjust);
  if (curves.test.empty()) throw std::runtime_error("backtest: no fully covered days after val_end");
  opts.gate_history = curves.history;

  std::map<std::pair<std::string, long>, const data::TradingDay*> day_index;
  for (const auto& d : loaded.days) day_index[{d.symbol, d.date.serial()}] = &d;

  std::vector<execsim::SimResult> results;
  for (const auto& [key, curve] : curves.test) {
    const auto* day = day_index.at({key.first, key.second.serial()});
    for (const auto side : sides) {
      auto plan = pipeline::plan_from_curve(key.first, key.second, curve, side, opts);
      results.push_back(execsim::simulate_day(*day, plan, fill));
    }
  }

  execsim::write_ledger(ctx.declare("ledger.csv").string(), results);
  auto summary = execsim::aggregate_stats(results);
  auto vi_report = execsim::vi_stress_split(results);
  json sj = summary_json(summary);
  sj["vi_split"] = json{{"vi_days", vi_report.vi_days},
                        {"non_vi_days", vi_report.non_vi_days},
                        {"vi", summary_json(vi_report.vi)},
                        {"non_vi", summary_json(vi_report.non_vi)}};
  write_json(ctx, "summary.json", sj);

  ctx.config["fill"] = fill_config_json(fill);
  write_resolved_config(ctx);
  std::cout << "backtest: " << results.size() << " executions, mean " << summary.all.mean_bp << " bp, beat ratio "
            << summary.all.beat_ratio << "\n";
  return 0;
}

int cmd_spike_analysis(RunContext& ctx) {
  auto loaded = load_data(section(ctx.config, "data"), ctx.seed);
  const json feat = section(ctx.config, "features");
  const int context_len = get_or(feat, "context_len", loaded.bars_per_day);
  const int horizon = get_or(feat, "horizon", 3);
  const auto dates = split_dates(section(ctx.config, "split"));

  const json sp = section(ctx.config, "spike");
  if (!sp.contains("checkpoint")) throw std::runtime_error("spike-analysis: config needs spike.checkpoint");
  const std::string units = get_or<std::string>(sp, "units", "transformed");
  if (units != "transformed" && units != "raw")
    throw std::runtime_error("spike-analysis: units must be 'transformed' or 'raw'");
  auto m = model::load_model(sp.at("checkpoint").get<std::string>());
  if (m->kind() != "ive") throw std::runtime_error("spike-analysis: needs a probabilistic (ive) checkpoint");

  auto windows = features::build_windows(loaded.days, loaded.meta, context_len, horizon);
  std::vector<features::FeatureWindow> test_windows;
  for (const auto& w : windows)
    if (w.first_target_date > dates.val_end) test_windows.push_back(w);
  auto curves = pipeline::predict_curves(*m, test_windows, ctx.threads);
  if (curves.empty()) throw std::runtime_error("spike-analysis: no fully covered days after val_end");

  auto series = pipeline::collect_spike_series(curves, units == "transformed");
  auto level = analysis::spike_level_regression(series.pred_std, series.ratio);
  auto diff = analysis::spike_diff_regression_pairs(series.d_std, series.d_ratio);

  write_json(ctx, "spike_analysis.json",
             json{{"units", units},
                  {"n_minutes", series.pred_std.size()},
                  {"level", ols_json(level)},
                  {"diff", ols_json(diff)}});
  write_resolved_config(ctx);
  std::cout << "spike-analysis (" << units << " units)\n-- level --\n"
            << level.table() << "-- diff (positive ratio increases) --\n"
            << diff.table();
  return 0;
}

int cmd_perf_regression(RunContext& ctx) {
  auto loaded = load_data(section(ctx.config, "data"), ctx.seed);
  const json pr = section(ctx.config, "perf");
  if (!pr.contains("ledger")) throw std::runtime_error("perf-regression: config needs perf.ledger");

  std::map<std::pair<std::string, long>, const data::TradingDay*> day_index;
  for (const auto& d : loaded.days) day_index[{d.symbol, d.date.serial()}] = &d;

  std::ifstream in(pr.at("ledger").get<std::string>());
  if (!in) throw std::runtime_error("cannot open ledger '" + pr.at("ledger").get<std::string>() + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("perf-regression: empty ledger");
  if (line.find("symbol,date,side,qty,avg_exec,vwap,perf_bp") != 0)
    throw std::runtime_error("perf-regression: unexpected ledger header");
  std::vector<analysis::MarketFeatures> rows;
  std::vector<double> perf;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string token;
    for (char ch : line) {
      if (ch == ',') {
        f.push_back(token);
        token.clear();
      } else {
        token.push_back(ch);
      }
    }
    f.push_back(token);
    if (f.size() != 8) throw std::runtime_error("perf-regression: bad ledger row at line " + std::to_string(line_no));
    const auto key = std::make_pair(f[0], data::Date::parse(f[1]).serial());
    auto it = day_index.find(key);
    if (it == day_index.end()) throw std::runtime_error("perf-regression: no market data for " + f[0] + " " + f[1]);
    rows.push_back(analysis::compute_market_features(*it->second, loaded.meta.at(f[0])));
    perf.push_back(std::stod(f[6]));
  }

  auto result = analysis::performance_regression(rows, perf);
  write_json(ctx, "perf_regression.json", json{{"n", result.n}, {"result", ols_json(result)}});
  write_text(ctx, "perf_regression.txt", result.table());
  write_resolved_config(ctx);
  std::cout << result.table();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"intraday volume-ratio forecasting and VWAP execution research stack"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  std::string config_path;
  std::string out_override;
  std::int64_t seed_override = -1;
  int threads_override = 0;
  app.add_option("--config", config_path, "JSON run configuration")->required();
  app.add_option("--seed", seed_override, "override config seed");
  app.add_option("--out", out_override, "override output directory");
  app.add_option("--threads", threads_override, "worker threads (1 = bit-reproducible)");

  auto* synth = app.add_subcommand("synth", "generate a synthetic minute-bar universe");
  auto* train = app.add_subcommand("train", "train the forecaster or a baseline");
  auto* eval_cmd = app.add_subcommand("eval", "RMSE/MAE table for trained checkpoints");
  auto* backtest = app.add_subcommand("backtest", "simulate VWAP execution from model predictions");
  auto* spike = app.add_subcommand("spike-analysis", "predicted-std vs volume-ratio regressions");
  auto* perf = app.add_subcommand("perf-regression", "market-feature attribution of execution performance");

  CLI11_PARSE(app, argc, argv);

  RunContext ctx;
  try {
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot open config '" + config_path + "'");
    ctx.config = json::parse(in);

    ctx.seed = get_or<std::uint64_t>(ctx.config, "seed", 1);
    if (seed_override >= 0) ctx.seed = static_cast<std::uint64_t>(seed_override);
    ctx.config["seed"] = ctx.seed;

    std::string out_dir = get_or<std::string>(ctx.config, "out", "run_out");
    if (!out_override.empty()) out_dir = out_override;
    ctx.config["out"] = out_dir;
    ctx.out_dir = out_dir;

    ctx.threads = get_or(ctx.config, "threads", 1);
    if (threads_override > 0) ctx.threads = threads_override;
    if (ctx.threads < 1) ctx.threads = 1;
    ctx.config["threads"] = ctx.threads;

    fs::create_directories(ctx.out_dir);

    if (synth->parsed()) return cmd_synth(ctx);
    if (train->parsed()) return cmd_train(ctx);
    if (eval_cmd->parsed()) return cmd_eval(ctx);
    if (backtest->parsed()) return cmd_backtest(ctx);
    if (spike->parsed()) return cmd_spike_analysis(ctx);
    if (perf->parsed()) return cmd_perf_regression(ctx);
    throw std::runtime_error("no subcommand");
  } catch (const std::exception& e) {
    for (const auto& p : ctx.written) {
      std::error_code ec;
      fs::remove(p, ec);
    }
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
