// SPDX-License-Identifier: Apache-2.0
//
// Stochastic variational EM: one simultaneous gradient step on the encoder
// and the dictionary per batch, with J posterior samples aggregated by the
// average or the max ELBO.

#pragma once

#include "vsc/encoder.hpp"
#include "vsc/generator.hpp"
#include "vsc/objective.hpp"
#include "vsc/tape.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace vsc {

struct TrainConfig {
  int epochs = 300;
  Index batch_size = 100;
  int samples = 1;  // J
  double dict_lr = 0.5;
  double dict_lr_decay = 0.99;
  double enc_lr_max = 1e-2;
  double momentum = 0.9;
  double kappa = 1e-4;
  /// Global-norm clip on the encoder gradient; 0 disables.
  double enc_grad_clip = 0.0;
  std::uint64_t seed = 0;
  Sampling sampling = Sampling::max;
  ObjectiveConfig objective;
  /// Lambda of the validation objective.
  double val_lambda = 20.0;
  bool check_finite = true;

  void validate() const;
};

struct LearningRates {
  double dict = 0.0;
  double enc = 0.0;
};

/// dict = dict_lr * decay^epoch. enc follows a one-cycle policy: linear from
/// enc_lr_max/10 to enc_lr_max over the first 30% of `total_iterations`, then
/// cosine down to enc_lr_max/100 at the last iteration.
LearningRates schedule_lr(long iteration, int epoch, long total_iterations, const TrainConfig& cfg);

struct VariationalModel {
  Encoder encoder;
  Dictionary dict;
  WarmupState warmup;
};

VariationalModel init_model(const EncoderConfig& enc, Index data_dim, std::uint64_t seed, double kappa);

/// Nesterov momentum buffers for the encoder parameters.
struct OptimizerState {
  std::vector<Matrix> momentum;
};

struct StepStats {
  double loss = 0.0;
  ElboBreakdown elbo;
  double nonzero_fraction = 0.0;
  std::vector<Index> selected;
};

/// Gradients of the training loss kappa ||A||^2 - mean(aggregate(totals)).
struct LossGradients {
  std::vector<Matrix> encoder;  // in ParameterSet order
  Matrix dict;
  StepStats stats;
};

/// Draws J samples from `noise` and differentiates the loss at fixed parameters.
LossGradients loss_gradients(const VariationalModel& model, const Matrix& x, int samples, Sampling sampling,
                             const ObjectiveConfig& objective, Rng& noise, bool check_finite = true);

/// One update on batch `x` (data_dim x B). Advances nothing but the
/// parameters and momentum; the caller owns the warm-up and the schedule.
StepStats train_step(VariationalModel& model, OptimizerState& opt, const Matrix& x, const TrainConfig& cfg,
                     const LearningRates& lr, Rng& noise);

struct EpochLog {
  int epoch = 0;
  long iteration = 0;
  double train_loss = 0.0;
  double recon = 0.0;
  double kl_base = 0.0;
  double kl_gamma = 0.0;
  double val_loss = 0.0;
  double dict_lr = 0.0;
  double enc_lr = 0.0;
  WarmupState warmup;
  double nonzero_fraction = 0.0;
  double dict_norm = 0.0;
};

std::string to_json(const EpochLog& log);

/// Raised when a step produces a non-finite value.
class TrainingAborted : public NumericalError {
 public:
  TrainingAborted(long iteration, std::string term);
  long iteration() const { return iteration_; }
  const std::string& term() const { return term_; }

 private:
  long iteration_;
  std::string term_;
};

struct TrainResult {
  VariationalModel model;
  std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&, const VariationalModel&)>;

/// `train_x` and `val_x` are data_dim x n. Validation uses one posterior
/// sample per datum from a fixed stream, scored with the sparse objective.
TrainResult train(const Matrix& train_x, const Matrix& val_x, const TrainConfig& cfg, const EncoderConfig& enc,
                  const EpochCallback& on_epoch = {});

/// Same, continuing from an existing model.
TrainResult train(VariationalModel model, const Matrix& train_x, const Matrix& val_x, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// One posterior sample per column from the fixed eval stream of `seed`.
Matrix validation_codes(const VariationalModel& model, const Matrix& val_x, std::uint64_t seed);

/// Sparse objective of validation_codes at `lambda`, with the model's kappa.
double validation_objective(const VariationalModel& model, const Matrix& val_x, double lambda, std::uint64_t seed);

}  // namespace vsc
