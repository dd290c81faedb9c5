#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ive/features.hpp"
#include "ive/rng.hpp"
#include "ive/tensor.hpp"

namespace ive::model {

struct ModelConfig {
  int d_model = 64;
  int n_heads = 4;
  int enc_layers = 4;
  int dec_layers = 4;
  int ffn_mult = 4;
  int context_len = 390;
  int horizon = 3;
  int n_stocks = 1;
  double dropout = 0.1;
  double df_floor = 2.0;     // nu = df_floor + softplus(raw) keeps the variance finite
  double scale_floor = 1e-4;
  int feature_dim = features::kFeatureDim;
  int time_dim = features::kTimeDims;

  void validate() const;
};

// One horizon step of the probabilistic forecast, in transformed-target units.
struct StudentTParams {
  double df = 3.0;
  double loc = 0.0;
  double scale = 1.0;

  // Distribution standard deviation, scale * sqrt(df / (df - 2)). Finite for
  // df > 2, which the head's link function guarantees.
  double stddev() const;
};

// Negative log density of the Student-t at x; mean over steps for the span
// overload.
double student_t_nll(const StudentTParams& p, double x);
double student_t_nll(std::span<const StudentTParams> params, std::span<const double> target);

// Point forecast = distribution location (mode of the symmetric t).
std::vector<double> greedy_predict(std::span<const StudentTParams> params);

// Spike-aware forecast: loc + c * stddev when the gate is open.
double adjusted_predict(const StudentTParams& p, double c, bool gate);
std::vector<double> adjusted_predict(std::span<const StudentTParams> params, double c, bool gate);

// PE[p, 2i] = sin(p / 10000^(2i/d)), PE[p, 2i+1] = cos(p / 10000^(2i/d)).
std::vector<double> positional_encoding(int length, int d_model);

// Head link functions. The softplus is floored at 1e-6 so df stays strictly
// above df_floor in double precision even for raw values around -50, keeping
// the predicted variance finite for any pre-activation.
inline constexpr double kLinkEps = 1e-6;
double link_df(double raw, double df_floor);
double link_scale(double raw, double scale_floor);

// Common training surface for the forecaster and the recurrent baselines.
class TrainableModel {
 public:
  virtual ~TrainableModel() = default;

  // Scalar training loss for one sample. Dropout is applied only when an RNG
  // is supplied.
  virtual num::Tensor loss(num::Tape& tape, const features::FeatureWindow& window, Rng* dropout_rng) = 0;

  // Point forecasts for all horizon steps, no gradient tracking.
  virtual std::vector<double> point_forecast(const features::FeatureWindow& window) = 0;

  virtual std::vector<num::Parameter*> parameters() = 0;
  virtual const ModelConfig& config() const = 0;
  virtual std::string kind() const = 0;
};

// Encoder-decoder transformer with a Student-t distribution head.
class Forecaster : public TrainableModel {
 public:
  Forecaster(const ModelConfig& config, std::uint64_t init_seed);
  ~Forecaster() override;

  // Distribution parameters for every horizon step.
  std::vector<StudentTParams> forward(const features::FeatureWindow& window);

  num::Tensor loss(num::Tape& tape, const features::FeatureWindow& window, Rng* dropout_rng) override;
  std::vector<double> point_forecast(const features::FeatureWindow& window) override;
  std::vector<num::Parameter*> parameters() override;
  const ModelConfig& config() const override;
  std::string kind() const override { return "ive"; }

  // Raw (nu, mu, sigma) rows after link functions, shape [horizon, 3]; the
  // tape-tracked path shared by forward() and loss().
  num::Tensor forward_dist(num::Tape& tape, const features::FeatureWindow& window, Rng* dropout_rng);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

enum class BaselineKind { RNN_HR, LSTM_HR, BILSTM_HR };

std::string baseline_name(BaselineKind kind);      // "rnn-hr", "lstm-hr", "bilstm-hr"
BaselineKind parse_baseline(std::string_view name);

// Recurrent encoder over the same windows, final hidden state -> linear head
// -> horizon point predictions, trained with squared error.
class Baseline : public TrainableModel {
 public:
  Baseline(BaselineKind kind, const ModelConfig& config, std::uint64_t init_seed);
  ~Baseline() override;

  num::Tensor loss(num::Tape& tape, const features::FeatureWindow& window, Rng* dropout_rng) override;
  std::vector<double> point_forecast(const features::FeatureWindow& window) override;
  std::vector<num::Parameter*> parameters() override;
  const ModelConfig& config() const override;
  std::string kind() const override { return baseline_name(baseline_kind()); }
  BaselineKind baseline_kind() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Versioned binary container: config + kind + named parameter tensors.
// save -> load -> forward is bit-identical.
void save_checkpoint(const std::string& path, const TrainableModel& model);

struct Checkpoint {
  ModelConfig config;
  std::string kind;
  std::vector<std::pair<std::string, std::vector<double>>> tensors;
};

Checkpoint read_checkpoint(const std::string& path);

// Constructs the model named in the checkpoint and restores its parameters.
std::unique_ptr<TrainableModel> load_model(const std::string& path);

}  // namespace ive::model
