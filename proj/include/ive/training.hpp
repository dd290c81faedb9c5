#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ive/features.hpp"
#include "ive/model.hpp"
#include "ive/tensor.hpp"

namespace ive::training {

struct OptimConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  int max_steps = 1000;
  int batch_size = 16;
  double grad_clip = 1.0;      // global norm; <= 0 disables
  int eval_every = 100;        // steps between validation passes
  int patience = 10;           // validation evals without improvement before stopping
  double target_train_mae = 0.0;  // > 0: stop once the train-set MAE drops below this

  void validate() const;
};

// First/second moment accumulators, one slot per parameter tensor.
struct AdamWState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long step = 0;
};

// Decoupled weight decay:
//   m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2
//   theta <- theta - lr * mhat / (sqrt(vhat) + eps) - lr * wd * theta
// Consumes Parameter::grad; does not zero it.
void adamw_step(std::span<num::Parameter* const> params, AdamWState& state, const OptimConfig& config);

struct TrainReport {
  std::vector<double> train_loss;  // one entry per optimizer step
  std::vector<double> val_loss;    // one entry per validation pass
  double best_val_loss = 0.0;
  int best_step = -1;
  int steps_run = 0;
  double final_rmse = 0.0;         // on the test partition, 1-step-ahead
  double final_mae = 0.0;
  bool has_test_metrics = false;
  double wall_clock_sec = 0.0;     // diagnostics only; keep out of deterministic artifacts
  std::uint64_t seed = 0;
};

// Mini-batch loss minimization with gradient clipping and best-validation
// early stopping. The best-validation parameters are restored before
// returning. Deterministic given the seed when threads == 1.
TrainReport train(model::TrainableModel& model, const features::DatasetSplit& split, const OptimConfig& config,
                  std::uint64_t seed, int threads = 1);

struct Metrics {
  double rmse = 0.0;
  double mae = 0.0;
};

// 1-step-ahead point-forecast error in transformed-target units.
Metrics evaluate(model::TrainableModel& model, std::span<const features::FeatureWindow> windows);

// Mean per-sample loss (NLL for the forecaster, MSE for baselines).
double mean_loss(model::TrainableModel& model, std::span<const features::FeatureWindow> windows);

}  // namespace ive::training
