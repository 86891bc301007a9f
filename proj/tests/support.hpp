// SPDX-License-Identifier: Apache-2.0
//
// Shared oracles and fixtures for the unit and acceptance tests.

#pragma once

#include "vsc/dist.hpp"
#include "vsc/encoder.hpp"
#include "vsc/fista.hpp"
#include "vsc/objective.hpp"
#include "vsc/rng.hpp"
#include "vsc/tape.hpp"
#include "vsc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace vsc::testing {

/// Composite Simpson rule on [a, b] with n (even) intervals.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n = 20000) {
  if (n % 2) ++n;
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

/// Simpson over consecutive breakpoints, so kinks fall on panel edges.
inline double simpson_pieces(const std::function<double(double)>& f, std::vector<double> points, int n = 20000) {
  std::sort(points.begin(), points.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    if (points[i + 1] > points[i]) total += simpson(f, points[i], points[i + 1], n);
  }
  return total;
}

inline double quad_kl_gaussian(double mu, double sigma, double sigma0) {
  auto f = [&](double z) {
    const double lp = gaussian_log_pdf(z, mu, sigma), lq = gaussian_log_pdf(z, 0.0, sigma0);
    return std::exp(lp) * (lp - lq);
  };
  return simpson_pieces(f, {mu - 30 * sigma, mu, mu + 30 * sigma});
}

inline double quad_kl_laplacian(double mu, double b, double b0) {
  auto f = [&](double z) {
    const double lp = laplace_log_pdf(z, mu, b), lq = laplace_log_pdf(z, 0.0, b0);
    return std::exp(lp) * (lp - lq);
  };
  const double lo = std::min(mu, 0.0) - 60 * b, hi = std::max(mu, 0.0) + 60 * b;
  return simpson_pieces(f, {lo, std::min(mu, 0.0), std::max(mu, 0.0), hi});
}

/// Integrates in u = log z so both tails are resolved.
inline double quad_kl_gamma(double alpha, double beta, double alpha0, double beta0) {
  auto f = [&](double u) {
    const double z = std::exp(u);
    const double lp = special::gamma_log_pdf(z, alpha, beta), lq = special::gamma_log_pdf(z, alpha0, beta0);
    return std::exp(lp + u) * (lp - lq);
  };
  const double mode = std::log(alpha / beta);
  return simpson(f, mode - 40.0 / std::sqrt(alpha) - 10.0, mode + 10.0, 200000);
}

/// Cyclic coordinate descent on ||x - A z||^2 + lambda ||z||_1, run until the
/// iterate stops moving at machine precision.
inline Vector lasso_coordinate_descent(const Matrix& A, const Vector& x, double lambda, int max_sweeps = 200000) {
  const Index d = A.cols();
  Vector z = Vector::Zero(d);
  Vector r = x;
  const Vector sq = A.colwise().squaredNorm().transpose();
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double moved = 0.0;
    for (Index j = 0; j < d; ++j) {
      if (sq(j) == 0.0) continue;
      const double rho = A.col(j).dot(r) + sq(j) * z(j);
      const double next = (rho > lambda / 2 ? rho - lambda / 2 : (rho < -lambda / 2 ? rho + lambda / 2 : 0.0)) / sq(j);
      const double delta = next - z(j);
      if (delta != 0.0) {
        r -= delta * A.col(j);
        z(j) = next;
        moved = std::max(moved, std::abs(delta));
      }
    }
    if (moved < 1e-15) break;
  }
  return z;
}

inline Matrix random_matrix(Index rows, Index cols, std::uint64_t seed, double scale = 1.0) {
  Rng rng = make_stream(seed, 0x7E57);
  return scale * standard_normal(rows, cols, rng);
}

/// Small encoder configuration for gradient and training tests.
inline EncoderConfig small_encoder(PriorKind prior, Index input_dim = 6, Index latent_dim = 4) {
  EncoderConfig e;
  e.input_dim = input_dim;
  e.latent_dim = latent_dim;
  e.hidden = {8, 8};
  e.prior = prior;
  e.lambda0 = laplace_base(prior) ? 0.05 : 0.1;
  return e;
}

inline constexpr PriorKind kAllPriors[] = {
    PriorKind::gaussian,         PriorKind::laplacian,  PriorKind::thresh_gaussian,
    PriorKind::thresh_laplacian, PriorKind::thresh_gaussian_gamma, PriorKind::thresh_laplacian_gamma,
    PriorKind::spike_slab,
};

/// The training loss kappa ||A||^2 - mean(aggregate(totals)) as a function of
/// encoder parameters followed by the dictionary, with fixed noise draws.
struct LossProbe {
  EncoderConfig encoder;
  ObjectiveConfig objective;
  WarmupState warmup;
  Sampling sampling = Sampling::max;
  double kappa = 1e-4;
  Matrix x;
  std::vector<NoiseDraw> noise;
  std::vector<Matrix> inputs;

  MultiFn fn() const {
    return [this](Tape& tape, std::span<const Tensor> leaves) {
      const std::span<const Tensor> params = leaves.first(leaves.size() - 1);
      const Tensor& A = leaves.back();
      const Tensor xt = tape.constant(x);
      const PosteriorParams q = encode(params, xt, encoder, warmup);
      std::vector<Tensor> totals;
      for (const auto& n : noise) totals.push_back(elbo_sample(xt, q, A, encoder, objective, warmup, n).total);
      const Aggregate agg = aggregate(totals, sampling);
      return frobenius_penalty(A, kappa) - mean(agg.value);
    };
  }
};

inline LossProbe make_loss_probe(PriorKind prior, int J, Sampling sampling, Estimator estimator, std::uint64_t seed) {
  LossProbe p;
  p.encoder = small_encoder(prior);
  p.objective.estimator = estimator;
  p.sampling = sampling;
  p.warmup = WarmupState::at(2500);
  const Index batch = 5;
  p.x = random_matrix(p.encoder.input_dim, batch, seed, 0.5);
  const Encoder enc = init_encoder(p.encoder, seed);
  for (std::size_t i = 0; i < enc.params.size(); ++i) p.inputs.push_back(enc.params[i]);
  p.inputs.push_back(init_dictionary(p.encoder.input_dim, p.encoder.latent_dim, seed).A);
  Rng rng = make_stream(seed, 0xF00D);
  for (int j = 0; j < J; ++j) {
    NoiseDraw n = draw_noise(p.encoder, batch, rng);
    if (uses_gamma(prior)) n.gamma_u = uniform_open(p.encoder.latent_dim, batch, 0.0, 1.0, rng);
    p.noise.push_back(std::move(n));
  }
  return p;
}

/// `count` probes spread uniformly at random over every input coordinate.
inline std::vector<Probe> random_probes(std::span<const Matrix> inputs, int count, std::uint64_t seed) {
  Index total = 0;
  for (const auto& m : inputs) total += m.size();
  Rng rng = make_stream(seed, 0x9B0B);
  std::uniform_int_distribution<Index> pick(0, total - 1);
  std::vector<Probe> probes;
  for (int i = 0; i < count; ++i) {
    Index flat = pick(rng);
    std::size_t k = 0;
    while (flat >= inputs[k].size()) flat -= inputs[k++].size();
    probes.push_back({k, flat});
  }
  return probes;
}

}  // namespace vsc::testing
