// SPDX-License-Identifier: Apache-2.0

#include "vsc/evaluate.hpp"

#include "vsc/rng.hpp"

#include <algorithm>
#include <stdexcept>

namespace vsc {

namespace {
constexpr std::uint64_t kIwaeStream = 0x1AE;
constexpr std::uint64_t kJaccardStream = 0x7AC;

double nonzero(const Matrix& Z) {
  return Z.size() > 0 ? static_cast<double>((Z.array() != 0.0).count()) / static_cast<double>(Z.size()) : 0.0;
}
}  // namespace

void EvalOptions::validate() const {
  if (lambda < 0) throw std::invalid_argument("eval: lambda must be non-negative");
  if (iwae_k < 0 || snr_draws < 0 || jaccard_j < 0 || mi_k < 0) {
    throw std::invalid_argument("eval: metric knobs must be non-negative");
  }
  if (snr_draws == 1) throw std::invalid_argument("eval: snr_draws must be 0 or >= 2");
  if (jaccard_j == 1) throw std::invalid_argument("eval: jaccard_j must be 0 or >= 2");
  if (snr_samples < 1) throw std::invalid_argument("eval: snr_samples must be >= 1");
  if (snr_batch < 1 || max_points < 1) throw std::invalid_argument("eval: batch sizes must be >= 1");
  if (!(collapse_eps >= 0) || !(collapse_delta >= 0 && collapse_delta < 1)) {
    throw std::invalid_argument("eval: collapse thresholds out of range");
  }
}

MetricsReport evaluate_model(const VariationalModel& model, const Matrix& X, const EvalOptions& opts,
                             Sampling sampling, const ObjectiveConfig& objective) {
  opts.validate();
  if (X.rows() != model.dict.data_dim()) throw ShapeError("evaluate: data dimension does not match the model");
  const EncoderConfig& cfg = model.encoder.config;
  MetricsReport r;
  r.method = std::string(to_string(cfg.prior));
  r.seed = opts.seed;
  if (X.cols() == 0) return r;

  const Matrix Z = validation_codes(model, X, opts.seed);
  r.validation_loss = dictionary_objective(model.dict.A, X, Z, opts.lambda, model.dict.kappa);
  r.nonzero_fraction = nonzero(Z);

  const Index m = std::min(X.cols(), opts.max_points);
  const Matrix Xs = X.leftCols(m);
  if (opts.mi_k > 0 && m > opts.mi_k) r.multi_information = multi_information(Z.leftCols(m), opts.mi_k, opts.seed).value;

  const PosteriorValues q = infer_posterior(model.encoder, Xs, model.warmup);
  if (opts.iwae_k > 0) {
    Rng rng = make_stream(opts.seed, kIwaeStream);
    r.iwae_loss = iwae_loss(cfg, q, model.dict.A, Xs, opts.iwae_k, rng);
  }
  if (opts.jaccard_j > 0) {
    Rng rng = make_stream(opts.seed, kJaccardStream);
    const JaccardResult jac = jaccard_consistency(cfg, q, model.dict.A, opts.jaccard_j, rng);
    r.jaccard_mean = jac.mean;
    r.jaccard_histogram = histogram01(jac.per_datum);
  }
  const CollapseMetrics col = collapse_metrics(cfg, q, opts.collapse_eps, opts.collapse_delta);
  r.posterior_collapse_pct = col.posterior_collapse_pct;
  r.feature_collapse_pct = col.feature_collapse_pct;

  if (opts.snr_draws > 0) {
    SnrOptions so;
    so.draws = opts.snr_draws;
    so.samples = opts.snr_samples;
    so.sampling = sampling;
    so.objective = objective;
    so.seed = opts.seed;
    const ModelSnr snr = model_grad_snr(model, X.leftCols(std::min(X.cols(), opts.snr_batch)), so);
    r.snr_encoder = snr.encoder.snr;
    r.snr_generator = snr.generator.snr;
    r.snr_excluded = snr.encoder.excluded + snr.generator.excluded;
  }
  return r;
}

MetricsReport evaluate_dictionary(const Dictionary& dict, const Matrix& X, const EvalOptions& opts,
                                  const FistaConfig& fista) {
  opts.validate();
  if (X.rows() != dict.data_dim()) throw ShapeError("evaluate: data dimension does not match the dictionary");
  MetricsReport r;
  r.method = "fista";
  r.seed = opts.seed;
  if (X.cols() == 0) return r;
  const FistaResult res = fista_infer(dict.A, X, opts.lambda, fista.max_iters, fista.tol);
  r.validation_loss = dictionary_objective(dict.A, X, res.Z, opts.lambda, dict.kappa);
  r.nonzero_fraction = nonzero(res.Z);
  const Index m = std::min(X.cols(), opts.max_points);
  if (opts.mi_k > 0 && m > opts.mi_k) r.multi_information = multi_information(res.Z.leftCols(m), opts.mi_k, opts.seed).value;
  return r;
}

}  // namespace vsc
