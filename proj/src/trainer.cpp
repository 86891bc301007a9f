// SPDX-License-Identifier: Apache-2.0

#include "vsc/trainer.hpp"

#include "vsc/fista.hpp"
#include "vsc/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace vsc {

namespace {
constexpr std::uint64_t kShuffleStream = 0x5AF;
constexpr std::uint64_t kNoiseStream = 0x401E;
constexpr std::uint64_t kEvalStream = 0xE7A1;
}  // namespace

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (samples < 1) throw std::invalid_argument("train: samples (J) must be >= 1");
  if (!(dict_lr > 0) || !(enc_lr_max > 0)) throw std::invalid_argument("train: learning rates must be positive");
  if (!(dict_lr_decay > 0)) throw std::invalid_argument("train: dict_lr_decay must be positive");
  if (momentum < 0 || momentum >= 1) throw std::invalid_argument("train: momentum must lie in [0, 1)");
  if (kappa < 0) throw std::invalid_argument("train: kappa must be non-negative");
  if (enc_grad_clip < 0) throw std::invalid_argument("train: enc_grad_clip must be non-negative");
  if (objective.beta_kl < 0 || objective.beta_gamma < 0) throw std::invalid_argument("train: KL weights must be >= 0");
}

LearningRates schedule_lr(long iteration, int epoch, long total_iterations, const TrainConfig& cfg) {
  LearningRates lr;
  lr.dict = cfg.dict_lr * std::pow(cfg.dict_lr_decay, epoch);
  const double top = cfg.enc_lr_max;
  const double total = static_cast<double>(std::max(total_iterations, 1L));
  const double warm = 0.3 * total;
  const double t = static_cast<double>(iteration);
  if (t < warm) {
    lr.enc = top / 10.0 + (top - top / 10.0) * t / warm;
  } else {
    const double span = std::max(total - 1.0 - warm, 1.0);
    const double p = std::clamp((t - warm) / span, 0.0, 1.0);
    lr.enc = top / 100.0 + (top - top / 100.0) * 0.5 * (1.0 + std::cos(M_PI * p));
  }
  return lr;
}

VariationalModel init_model(const EncoderConfig& enc, Index data_dim, std::uint64_t seed, double kappa) {
  EncoderConfig cfg = enc;
  cfg.input_dim = data_dim;
  return {init_encoder(cfg, seed), init_dictionary(data_dim, cfg.latent_dim, seed, kappa), WarmupState::at(0)};
}

TrainingAborted::TrainingAborted(long iteration, std::string term)
    : NumericalError("training aborted at iteration " + std::to_string(iteration) + ": " + term),
      iteration_(iteration),
      term_(std::move(term)) {}

LossGradients loss_gradients(const VariationalModel& model, const Matrix& x, int samples, Sampling sampling,
                             const ObjectiveConfig& objective, Rng& noise, bool check_finite) {
  const EncoderConfig& enc = model.encoder.config;
  LossGradients out;
  StepStats& stats = out.stats;
  Tape tape;
  tape.set_check_finite(check_finite);
  const auto params = model.encoder.params.bind(tape, true);
  const Tensor A = tape.leaf(model.dict.A);
  const Tensor xt = tape.constant(x);
  const PosteriorParams q = encode(params, xt, enc, model.warmup);
  std::vector<ElboTerms> terms;
  std::vector<Tensor> totals;
  terms.reserve(static_cast<std::size_t>(samples));
  for (int j = 0; j < samples; ++j) {
    const NoiseDraw draw = draw_noise(enc, x.cols(), noise);
    terms.push_back(elbo_sample(xt, q, A, enc, objective, model.warmup, draw, &noise));
    totals.push_back(terms.back().total);
  }
  Aggregate agg = aggregate(totals, sampling);
  const Tensor loss = frobenius_penalty(A, model.dict.kappa) - mean(agg.value);
  stats.loss = loss.item();
  if (!std::isfinite(stats.loss)) throw NumericalError("non-finite loss");
  stats.elbo = summarize(terms);
  double nz = 0.0;
  for (const auto& t : terms) nz += static_cast<double>((t.code.value().array() != 0.0).count());
  stats.nonzero_fraction = nz / (static_cast<double>(terms.size()) * static_cast<double>(x.cols() * enc.latent_dim));
  stats.selected = std::move(agg.selected);

  const Gradients grads = tape.backward(loss);
  out.dict = grads[A];
  if (!out.dict.allFinite()) throw NumericalError("non-finite dictionary gradient");
  out.encoder.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.encoder[i] = grads[params[i]];
    if (!out.encoder[i].allFinite()) throw NumericalError("non-finite gradient for " + model.encoder.params.name(i));
  }
  return out;
}

StepStats train_step(VariationalModel& model, OptimizerState& opt, const Matrix& x, const TrainConfig& cfg,
                     const LearningRates& lr, Rng& noise) {
  const long iteration = model.warmup.iteration;
  LossGradients g;
  try {
    g = loss_gradients(model, x, cfg.samples, cfg.sampling, cfg.objective, noise, cfg.check_finite);
  } catch (const NumericalError& e) {
    throw TrainingAborted(iteration, e.what());
  }
  if (opt.momentum.size() != g.encoder.size()) {
    opt.momentum.clear();
    for (const auto& gi : g.encoder) opt.momentum.push_back(Matrix::Zero(gi.rows(), gi.cols()));
  }
  if (cfg.enc_grad_clip > 0) {
    double sq = 0.0;
    for (const auto& gi : g.encoder) sq += gi.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > cfg.enc_grad_clip) {
      for (auto& gi : g.encoder) gi *= cfg.enc_grad_clip / norm;
    }
  }
  for (std::size_t i = 0; i < g.encoder.size(); ++i) {
    Matrix& buf = opt.momentum[i];
    buf = cfg.momentum * buf + g.encoder[i];
    model.encoder.params[i] -= lr.enc * (g.encoder[i] + cfg.momentum * buf);
  }
  model.dict.A -= lr.dict * g.dict;
  return std::move(g.stats);
}

std::string to_json(const EpochLog& log) {
  nlohmann::ordered_json j;
  j["epoch"] = log.epoch;
  j["iteration"] = log.iteration;
  j["train_loss"] = log.train_loss;
  j["recon"] = log.recon;
  j["kl_base"] = log.kl_base;
  j["kl_gamma"] = log.kl_gamma;
  j["val_loss"] = log.val_loss;
  j["dict_lr"] = log.dict_lr;
  j["enc_lr"] = log.enc_lr;
  j["omega"] = log.warmup.omega;
  j["tau"] = log.warmup.tau;
  j["kl_ramp"] = log.warmup.kl_ramp;
  j["nonzero_fraction"] = log.nonzero_fraction;
  j["dict_norm"] = log.dict_norm;
  return j.dump();
}

Matrix validation_codes(const VariationalModel& model, const Matrix& val_x, std::uint64_t seed) {
  const PosteriorValues q = infer_posterior(model.encoder, val_x, model.warmup);
  Rng rng = make_stream(seed, kEvalStream);
  return sample_codes(model.encoder.config, q, rng);
}

double validation_objective(const VariationalModel& model, const Matrix& val_x, double lambda, std::uint64_t seed) {
  if (val_x.cols() == 0) return 0.0;
  return dictionary_objective(model.dict.A, val_x, validation_codes(model, val_x, seed), lambda, model.dict.kappa);
}

TrainResult train(const Matrix& train_x, const Matrix& val_x, const TrainConfig& cfg, const EncoderConfig& enc,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  return train(init_model(enc, train_x.rows(), cfg.seed, cfg.kappa), train_x, val_x, cfg, on_epoch);
}

TrainResult train(VariationalModel model, const Matrix& train_x, const Matrix& val_x, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_x.cols() == 0) throw std::invalid_argument("train: empty dataset");
  if (train_x.rows() != model.encoder.config.input_dim || train_x.rows() != model.dict.data_dim()) {
    throw ShapeError("train: data dimension does not match the model");
  }
  if (val_x.cols() > 0 && val_x.rows() != train_x.rows()) throw ShapeError("train: validation dimension mismatch");

  const Index n = train_x.cols();
  const long batches = static_cast<long>((n + cfg.batch_size - 1) / cfg.batch_size);
  const long total = batches * cfg.epochs;
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng shuffle = make_stream(cfg.seed, kShuffleStream);
  Rng noise = make_stream(cfg.seed, kNoiseStream);
  OptimizerState opt;
  TrainResult result;
  long iteration = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle);
    EpochLog log;
    log.epoch = epoch;
    double weight = 0.0;
    for (Index start = 0; start < n; start += cfg.batch_size) {
      const Index m = std::min(cfg.batch_size, n - start);
      Matrix xb(train_x.rows(), m);
      for (Index j = 0; j < m; ++j) xb.col(j) = train_x.col(order[static_cast<std::size_t>(start + j)]);
      const LearningRates lr = schedule_lr(iteration, epoch, total, cfg);
      const StepStats s = train_step(model, opt, xb, cfg, lr, noise);
      const double w = static_cast<double>(m);
      log.train_loss += w * s.loss;
      log.recon += w * s.elbo.recon;
      log.kl_base += w * s.elbo.kl_base;
      log.kl_gamma += w * s.elbo.kl_gamma.value_or(0.0);
      log.nonzero_fraction += w * s.nonzero_fraction;
      weight += w;
      log.dict_lr = lr.dict;
      log.enc_lr = lr.enc;
      model.warmup.advance();
      ++iteration;
    }
    log.train_loss /= weight;
    log.recon /= weight;
    log.kl_base /= weight;
    log.kl_gamma /= weight;
    log.nonzero_fraction /= weight;
    log.iteration = iteration;
    log.warmup = model.warmup;
    log.val_loss = validation_objective(model, val_x, cfg.val_lambda, cfg.seed);
    log.dict_norm = model.dict.A.norm();
    result.log.push_back(log);
    if (on_epoch) on_epoch(log, model);
  }
  result.model = std::move(model);
  return result;
}

}  // namespace vsc
