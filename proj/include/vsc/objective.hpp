// SPDX-License-Identifier: Apache-2.0
//
// Per-sample ELBO terms, average and max-ELBO aggregation over J samples, and
// the importance-weighted bound.

#pragma once

#include "vsc/encoder.hpp"
#include "vsc/generator.hpp"
#include "vsc/rng.hpp"
#include "vsc/tape.hpp"

#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace vsc {

enum class Estimator { straight_through, subgradient };
enum class Sampling { max, avg };

std::string_view to_string(Estimator e);
std::string_view to_string(Sampling s);
Estimator parse_estimator(std::string_view name);
Sampling parse_sampling(std::string_view name);

struct ObjectiveConfig {
  double beta_kl = 1e-2;
  /// KL weight of the Gamma threshold prior.
  double beta_gamma = 1e-3;
  Estimator estimator = Estimator::straight_through;
};

/// Noise for one posterior sample of a batch.
struct NoiseDraw {
  Matrix base;      // N(0, 1) for Gaussian bases, U(-1/2, 1/2) for Laplacian bases
  Matrix logistic;  // spike_slab gate noise
  Matrix gamma_u;   // optional: uniforms for inverse-CDF threshold draws
};

NoiseDraw draw_noise(const EncoderConfig& config, Index batch, Rng& rng);

/// Per-datum terms of one sample (each 1 x B).
struct ElboTerms {
  Tensor recon;
  Tensor kl_base;
  Tensor kl_gamma;  // invalid unless the threshold is inferred
  Tensor total;
  Tensor base;       // s, latent x B
  Tensor threshold;  // lambda: latent x B when inferred, 1x1 when fixed; invalid if unthresholded
  Tensor code;       // z~, latent x B
};

/// One ELBO sample. Threshold draws come from `noise.gamma_u` when present,
/// otherwise from `gamma_rng` (required for the Gamma variants).
ElboTerms elbo_sample(const Tensor& x, const PosteriorParams& q, const Tensor& A, const EncoderConfig& enc,
                      const ObjectiveConfig& obj, const WarmupState& warmup, const NoiseDraw& noise,
                      Rng* gamma_rng = nullptr);

/// Batch-mean summary of J samples.
struct ElboBreakdown {
  double recon = 0.0;
  double kl_base = 0.0;
  std::optional<double> kl_gamma;
  double total = 0.0;
  std::vector<double> per_sample;  // batch-mean total of each sample
};

ElboBreakdown summarize(std::span<const ElboTerms> samples);

double aggregate_avg(std::span<const double> losses);
/// Maximum and its index; ties go to the lowest index.
std::pair<double, std::size_t> aggregate_max(std::span<const double> losses);

/// Tape aggregation of per-datum totals (each 1 x B). For max sampling the
/// selection is per datum and `selected` holds the chosen sample of each column.
struct Aggregate {
  Tensor value;
  std::vector<Index> selected;
};
Aggregate aggregate(std::span<const Tensor> totals, Sampling sampling);

// ---------------------------------------------------------------------------
// Gradient-free evaluation helpers.

/// One thresholded code sample per column.
Matrix sample_codes(const EncoderConfig& config, const PosteriorValues& q, Rng& rng);

/// Posterior-mean code E_q[z~].
Matrix mean_codes(const EncoderConfig& config, const PosteriorValues& q);

/// Per-datum importance-weighted bound with K samples. Densities live on the
/// base variables: log w = log p(x|z~) + log p(s) - log q(s|x), plus the
/// threshold ratio for Gamma variants and the exact Bernoulli gate ratio for
/// spike_slab.
Eigen::RowVectorXd iwae_bound(const EncoderConfig& config, const PosteriorValues& q, const Matrix& A,
                              const Matrix& x, int K, Rng& rng);

/// Negated mean bound.
double iwae_loss(const EncoderConfig& config, const PosteriorValues& q, const Matrix& A, const Matrix& x, int K,
                 Rng& rng);

}  // namespace vsc
