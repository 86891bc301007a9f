// SPDX-License-Identifier: Apache-2.0
//
// Reparameterizable base distributions, their KL divergences against the
// factorial priors, the shifted soft-threshold and its straight-through form.
//
// Each quantity comes in two flavours: a scalar template usable from plain
// Eigen code (metrics, oracles) and a Tensor op that records gradients.

#pragma once

#include "vsc/rng.hpp"
#include "vsc/special.hpp"
#include "vsc/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vsc {

/// Minimum argument of the log in the Laplace inverse CDF.
inline constexpr double kLaplaceLogFloor = 1e-6;
/// Clamp range for Gamma concentration/rate in natural units.
inline constexpr double kGammaParamMin = 1e-6;
inline constexpr double kGammaParamMax = 1e6;

// ---------------------------------------------------------------------------
// Scalar closed forms.

/// sign(s - mu) * max(|s - mu| - lambda, 0) + 1[|s - mu| > lambda] * mu
template <class Scalar>
Scalar shifted_soft_threshold(Scalar s, Scalar lambda, Scalar mu) {
  const Scalar d = s - mu;
  const Scalar ad = std::abs(d);
  if (ad <= lambda) return Scalar(0);
  return (d > 0 ? ad - lambda : lambda - ad) + mu;
}

/// Mass collapsed to zero when Laplace(mu, b) samples are thresholded at lambda.
template <class Scalar>
Scalar spike_probability(Scalar lambda, Scalar b) {
  if (lambda < 0) throw std::invalid_argument("spike_probability: negative threshold");
  if (!(b > 0)) throw std::invalid_argument("spike_probability: scale must be positive");
  return -std::expm1(-lambda / b);
}

/// Same quantity for a Gaussian base N(mu, sigma^2).
template <class Scalar>
Scalar gaussian_spike_probability(Scalar lambda, Scalar sigma) {
  return std::erf(lambda / (sigma * std::sqrt(Scalar(2))));
}

/// Threshold leaving a fraction `nonzero` of Laplace(0, b) samples nonzero.
template <class Scalar>
Scalar laplace_threshold_for_nonzero(Scalar nonzero, Scalar b) {
  if (!(nonzero > 0 && nonzero <= 1)) throw std::invalid_argument("nonzero fraction must lie in (0, 1]");
  return -b * std::log(nonzero);
}

/// Same for N(0, sigma^2), by bisection on erfc.
template <class Scalar>
Scalar gaussian_threshold_for_nonzero(Scalar nonzero, Scalar sigma) {
  if (!(nonzero > 0 && nonzero <= 1)) throw std::invalid_argument("nonzero fraction must lie in (0, 1]");
  Scalar lo = 0, hi = 40 * sigma;
  for (int it = 0; it < 200; ++it) {
    const Scalar mid = (lo + hi) / 2;
    if (1 - gaussian_spike_probability(mid, sigma) > nonzero) lo = mid; else hi = mid;
  }
  return (lo + hi) / 2;
}

/// KL( N(mu, sigma^2) || N(0, sigma0^2) ).
template <class Scalar>
Scalar kl_gaussian(Scalar mu, Scalar sigma, Scalar sigma0) {
  return (mu * mu + sigma * sigma) / (2 * sigma0 * sigma0) + std::log(sigma0 / sigma) - Scalar(0.5);
}

/// KL( Laplace(mu, b) || Laplace(0, b0) ).
template <class Scalar>
Scalar kl_laplacian(Scalar mu, Scalar b, Scalar b0) {
  const Scalar am = std::abs(mu);
  return am / b0 + b * std::exp(-am / b) / b0 + std::log(b0 / b) - 1;
}

/// KL( Gamma(alpha, beta) || Gamma(alpha0, beta0) ), rate parameterization.
template <class Scalar>
Scalar kl_gamma(Scalar alpha, Scalar beta, Scalar alpha0, Scalar beta0) {
  return (alpha - alpha0) * special::digamma(alpha) - std::lgamma(alpha) + std::lgamma(alpha0) +
         alpha0 * (std::log(beta) - std::log(beta0)) + alpha * (beta0 - beta) / beta;
}

template <class Scalar>
Scalar kl_bernoulli(Scalar p, Scalar p0) {
  Scalar out = 0;
  if (p > 0) out += p * std::log(p / p0);
  if (p < 1) out += (1 - p) * std::log((1 - p) / (1 - p0));
  return out;
}

/// Inverse-CDF map of Laplace(mu, b) from eps ~ U(-1/2, 1/2).
template <class Scalar>
Scalar laplace_from_uniform(Scalar eps, Scalar mu, Scalar b) {
  const Scalar sgn = eps > 0 ? Scalar(1) : (eps < 0 ? Scalar(-1) : Scalar(0));
  return mu - b * sgn * std::log(std::max(Scalar(1) - 2 * std::abs(eps), Scalar(kLaplaceLogFloor)));
}

template <class Scalar>
Scalar laplace_cdf(Scalar x, Scalar mu, Scalar b) {
  const Scalar d = (x - mu) / b;
  return d < 0 ? Scalar(0.5) * std::exp(d) : Scalar(1) - Scalar(0.5) * std::exp(-d);
}

template <class Scalar>
Scalar laplace_log_pdf(Scalar x, Scalar mu, Scalar b) {
  return -std::log(2 * b) - std::abs(x - mu) / b;
}

template <class Scalar>
Scalar gaussian_log_pdf(Scalar x, Scalar mu, Scalar sigma) {
  const Scalar d = (x - mu) / sigma;
  return Scalar(-0.5) * d * d - std::log(sigma) - Scalar(0.5) * std::log(Scalar(2) * Scalar(M_PI));
}

// ---------------------------------------------------------------------------
// Gamma sampling with pathwise gradients.

/// Marsaglia-Tsang rejection sampler for Gamma(alpha, rate beta). Shapes
/// below one are boosted through Gamma(alpha + 1) * U^(1/alpha).
double draw_gamma(double alpha, double beta, Rng& rng);

/// dz/dalpha for z ~ Gamma(alpha, beta) by implicit differentiation of the CDF:
/// -(dF/dalpha) / f(z), with dF/dalpha from a central difference of the
/// regularized incomplete gamma (step 1e-4 * max(1, alpha)).
double gamma_sample_grad_alpha(double z, double alpha, double beta);

/// Quantile of Gamma(alpha, beta) at u in (0, 1).
double gamma_quantile(double u, double alpha, double beta);

// ---------------------------------------------------------------------------
// Parameter bundles (per datum, per latent dimension).

struct GaussianParams {
  Tensor mu;
  Tensor log_var;  // 2 log sigma
};

struct LaplacianParams {
  Tensor mu;
  Tensor log_b;
};

struct GammaParams {
  Tensor log_alpha;  // already clamped to [1e-6, 1e6] in natural units
  Tensor log_beta;
};

struct SpikeSlabParams {
  Tensor spike_logit;  // logit of the slab probability
  GaussianParams slab;
  double temperature = 1.0;
};

// ---------------------------------------------------------------------------
// Tensor ops.

/// Shifted soft-threshold with its true (sub)gradient: slope 1 in s outside
/// the dead zone, 0 inside; -sign(s - mu) in lambda outside the dead zone.
Tensor shifted_soft_threshold(const Tensor& s, const Tensor& lambda, const Tensor& mu);

/// s + T(sg[s]) - sg[s]: forward equals the shifted soft-threshold, gradient
/// in s is the identity. A learned lambda still receives gradient via T.
Tensor st_threshold(const Tensor& s, const Tensor& lambda, const Tensor& mu);

Tensor sample_gaussian(const GaussianParams& p, const Matrix& eps);
Tensor kl_gaussian(const GaussianParams& p, double sigma0);

Tensor sample_laplacian(const LaplacianParams& p, const Matrix& eps);
Tensor kl_laplacian(const LaplacianParams& p, double b0);

/// Draws z ~ Gamma(alpha, beta) elementwise, recording implicit pathwise
/// gradients with respect to log_alpha and log_beta.
Tensor sample_gamma(const GammaParams& p, Rng& rng);
/// Deterministic inverse-CDF variant for a fixed uniform draw u. Its
/// recorded gradient is the same implicit rule, which here is exact.
Tensor gamma_from_uniform(const GammaParams& p, const Matrix& u);
Tensor kl_gamma(const GammaParams& p, double alpha0, double beta0);

/// Straight-through Gumbel-sigmoid gate times a Gaussian slab sample.
/// `eps_logistic` is standard logistic noise.
Tensor sample_spike_slab(const SpikeSlabParams& p, const Matrix& eps_logistic, const Matrix& eps_normal);
Tensor kl_spike_slab(const SpikeSlabParams& p, double gamma0, double sigma0);

}  // namespace vsc
