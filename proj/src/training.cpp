#include "ive/training.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include "ive/rng.hpp"

namespace ive::training {

using features::FeatureWindow;
using num::Parameter;

void OptimConfig::validate() const {
  if (lr <= 0.0) throw std::invalid_argument("optim config: lr must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw std::invalid_argument("optim config: betas must be in [0, 1)");
  if (eps <= 0.0) throw std::invalid_argument("optim config: eps must be positive");
  if (weight_decay < 0.0) throw std::invalid_argument("optim config: weight_decay must be >= 0");
  if (max_steps < 1 || batch_size < 1) throw std::invalid_argument("optim config: steps/batch must be >= 1");
  if (eval_every < 1 || patience < 1) throw std::invalid_argument("optim config: eval_every/patience must be >= 1");
}

void adamw_step(std::span<Parameter* const> params, AdamWState& state, const OptimConfig& config) {
  if (state.m.empty()) {
    for (const Parameter* p : params) {
      state.m.emplace_back(p->value.size(), 0.0);
      state.v.emplace_back(p->value.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adamw_step: state/parameter count mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    if (m.size() != p.value.size()) throw std::invalid_argument("adamw_step: state shape mismatch for " + p.name);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.value[i] -= config.lr * mhat / (std::sqrt(vhat) + config.eps) + config.lr * config.weight_decay * p.value[i];
    }
  }
}

namespace {

double clip_gradients(std::span<Parameter* const> params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params)
    for (double g : p->grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scl = max_norm / norm;
    for (Parameter* p : params)
      for (double& g : p->grad) g *= scl;
  }
  return norm;
}

// Mean loss over a batch of windows, gradients accumulated into the
// parameters. With threads > 1 each worker accumulates into its own buffers,
// summed afterwards in worker order so the reduction order is fixed.
double batch_gradients(model::TrainableModel& model, std::span<const FeatureWindow> windows,
                       std::span<const std::size_t> batch, std::span<std::uint64_t const> dropout_seeds,
                       int threads) {
  auto params = model.parameters();
  const double inv_batch = 1.0 / static_cast<double>(batch.size());

  if (threads <= 1) {
    double total = 0.0;
    for (std::size_t bi = 0; bi < batch.size(); ++bi) {
      num::Tape tape;
      Rng dropout_rng(dropout_seeds[bi]);
      num::Tensor sample = model.loss(tape, windows[batch[bi]], &dropout_rng);
      num::Tensor scaled = tape.scale(sample, inv_batch);
      tape.backward(scaled);
      total += sample.scalar();
    }
    return total * inv_batch;
  }

  const int n_workers = std::min<int>(threads, static_cast<int>(batch.size()));
  std::unordered_map<const Parameter*, std::size_t> index;
  for (std::size_t pi = 0; pi < params.size(); ++pi) index[params[pi]] = pi;

  std::vector<std::vector<std::vector<double>>> sinks(n_workers);
  std::vector<double> partial(n_workers, 0.0);
  for (int w = 0; w < n_workers; ++w) {
    sinks[w].resize(params.size());
    for (std::size_t pi = 0; pi < params.size(); ++pi) sinks[w][pi].assign(params[pi]->value.size(), 0.0);
  }

  std::vector<std::thread> pool;
  for (int w = 0; w < n_workers; ++w) {
    pool.emplace_back([&, w]() {
      for (std::size_t bi = w; bi < batch.size(); bi += n_workers) {
        num::Tape tape;
        tape.set_sink_resolver([&, w](const Parameter& p) { return &sinks[w][index.at(&p)]; });
        Rng dropout_rng(dropout_seeds[bi]);
        num::Tensor sample = model.loss(tape, windows[batch[bi]], &dropout_rng);
        tape.backward(tape.scale(sample, inv_batch));
        partial[w] += sample.scalar();
      }
    });
  }
  for (auto& t : pool) t.join();

  // Merge in worker order: fixed reduction order for a given thread count.
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& grad = params[pi]->grad;
    for (int w = 0; w < n_workers; ++w) {
      const auto& sink = sinks[w][pi];
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += sink[i];
    }
  }
  double total = std::accumulate(partial.begin(), partial.end(), 0.0);
  return total * inv_batch;
}

}  // namespace

double mean_loss(model::TrainableModel& model, std::span<const FeatureWindow> windows) {
  if (windows.empty()) throw std::invalid_argument("mean_loss: empty window set");
  double total = 0.0;
  for (const auto& w : windows) {
    num::Tape tape;
    total += model.loss(tape, w, nullptr).scalar();
  }
  return total / static_cast<double>(windows.size());
}

Metrics evaluate(model::TrainableModel& model, std::span<const FeatureWindow> windows) {
  if (windows.empty()) throw std::invalid_argument("evaluate: empty window set");
  double se = 0.0, ae = 0.0;
  for (const auto& w : windows) {
    const double pred = model.point_forecast(w)[0];
    const double err = pred - w.target[0];
    se += err * err;
    ae += std::abs(err);
  }
  const double n = static_cast<double>(windows.size());
  return Metrics{std::sqrt(se / n), ae / n};
}

TrainReport train(model::TrainableModel& model, const features::DatasetSplit& split, const OptimConfig& config,
                  std::uint64_t seed, int threads) {
  config.validate();
  if (split.train.empty()) throw std::invalid_argument("train: empty training set");
  const auto t0 = std::chrono::steady_clock::now();

  auto params = model.parameters();
  AdamWState state;
  Rng rng(mix_seed(seed, 0x7261696Eull));  // ordering + dropout stream

  TrainReport report;
  report.seed = seed;

  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();  // force an initial shuffle

  const bool use_val = !split.validation.empty();
  std::vector<std::vector<double>> best_params;
  double best_val = std::numeric_limits<double>::infinity();
  int best_step = -1;
  int evals_since_best = 0;

  std::vector<std::size_t> batch;
  std::vector<std::uint64_t> dropout_seeds;
  for (int step = 1; step <= config.max_steps; ++step) {
    batch.clear();
    dropout_seeds.clear();
    for (int i = 0; i < config.batch_size; ++i) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
      dropout_seeds.push_back(rng.next_u64());
    }

    for (Parameter* p : params) p->zero_grad();
    const double loss = batch_gradients(model, split.train, batch, dropout_seeds, threads);
    if (!std::isfinite(loss))
      throw std::runtime_error("train: non-finite loss at step " + std::to_string(step) +
                               " (diverged; lower lr or raise grad_clip)");
    clip_gradients(params, config.grad_clip);
    adamw_step(params, state, config);
    report.train_loss.push_back(loss);
    report.steps_run = step;

    if (config.target_train_mae > 0.0 && step % config.eval_every == 0 &&
        evaluate(model, split.train).mae < config.target_train_mae)
      break;

    if (use_val && (step % config.eval_every == 0 || step == config.max_steps)) {
      const double val = mean_loss(model, split.validation);
      report.val_loss.push_back(val);
      if (val < best_val) {
        best_val = val;
        best_step = step;
        evals_since_best = 0;
        best_params.clear();
        for (const Parameter* p : params) best_params.push_back(p->value);
      } else {
        ++evals_since_best;
        if (evals_since_best >= config.patience) break;
      }
    }
  }

  if (!best_params.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_params[i];
    report.best_val_loss = best_val;
    report.best_step = best_step;
  } else if (use_val && !report.val_loss.empty()) {
    report.best_val_loss = report.val_loss.back();
  }

  if (!split.test.empty()) {
    const Metrics m = evaluate(model, split.test);
    report.final_rmse = m.rmse;
    report.final_mae = m.mae;
    report.has_test_metrics = true;
  }
  report.wall_clock_sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace ive::training
