// SPDX-License-Identifier: Apache-2.0

#include "vsc/objective.hpp"

#include "vsc/dist.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace vsc {

std::string_view to_string(Estimator e) {
  return e == Estimator::straight_through ? "straight_through" : "subgradient";
}

std::string_view to_string(Sampling s) { return s == Sampling::max ? "max" : "avg"; }

Estimator parse_estimator(std::string_view name) {
  if (name == "straight_through") return Estimator::straight_through;
  if (name == "subgradient") return Estimator::subgradient;
  throw std::invalid_argument("unknown estimator '" + std::string(name) + "'");
}

Sampling parse_sampling(std::string_view name) {
  if (name == "max") return Sampling::max;
  if (name == "avg") return Sampling::avg;
  throw std::invalid_argument("unknown sampling '" + std::string(name) + "'");
}

NoiseDraw draw_noise(const EncoderConfig& config, Index batch, Rng& rng) {
  const Index d = config.latent_dim;
  NoiseDraw n;
  if (laplace_base(config.prior)) {
    n.base = uniform_open(d, batch, -0.5, 0.5, rng);
  } else {
    n.base = standard_normal(d, batch, rng);
  }
  if (config.prior == PriorKind::spike_slab) n.logistic = logistic_noise(d, batch, rng);
  return n;
}

namespace {

void require_finite(const Tensor& t, const char* term) {
  if (!t.value().allFinite()) throw NumericalError(std::string("elbo: non-finite ") + term);
}

}  // namespace

ElboTerms elbo_sample(const Tensor& x, const PosteriorParams& q, const Tensor& A, const EncoderConfig& enc,
                      const ObjectiveConfig& obj, const WarmupState& warmup, const NoiseDraw& noise,
                      Rng* gamma_rng) {
  Tape& tape = x.tape();
  const double scale0 = enc.prior_base_scale();
  ElboTerms out;
  Tensor kl_weighted;
  if (enc.prior == PriorKind::spike_slab) {
    const SpikeSlabParams p{q.spike_logit, q.gaussian(), warmup.tau};
    out.code = sample_spike_slab(p, noise.logistic, noise.base);
    out.base = out.code;
    out.kl_base = col_sum(kl_spike_slab(p, enc.spike_prior, scale0));
    kl_weighted = scale(out.kl_base, obj.beta_kl * warmup.kl_ramp);
  } else {
    const bool laplace = laplace_base(enc.prior);
    out.base = laplace ? sample_laplacian(q.laplacian(), noise.base) : sample_gaussian(q.gaussian(), noise.base);
    out.kl_base = col_sum(laplace ? kl_laplacian(q.laplacian(), scale0) : kl_gaussian(q.gaussian(), scale0));
    kl_weighted = scale(out.kl_base, obj.beta_kl);
    if (is_thresholded(enc.prior)) {
      if (uses_gamma(enc.prior)) {
        if (noise.gamma_u.size() > 0) {
          out.threshold = gamma_from_uniform(q.gamma(), noise.gamma_u);
        } else {
          if (gamma_rng == nullptr) throw std::invalid_argument("elbo_sample: Gamma threshold needs an rng");
          out.threshold = sample_gamma(q.gamma(), *gamma_rng);
        }
        out.kl_gamma = col_sum(kl_gamma(q.gamma(), enc.alpha0, enc.beta0()));
        kl_weighted = kl_weighted + scale(out.kl_gamma, obj.beta_gamma);
      } else {
        out.threshold = tape.constant(enc.lambda0);
      }
      out.code = obj.estimator == Estimator::straight_through
                     ? st_threshold(out.base, out.threshold, q.shift)
                     : shifted_soft_threshold(out.base, out.threshold, q.shift);
    } else {
      out.code = out.base;
    }
  }
  out.recon = log_likelihood_per_datum(A, x, out.code);
  require_finite(out.recon, "reconstruction term");
  require_finite(out.kl_base, "base KL term");
  if (out.kl_gamma.valid()) require_finite(out.kl_gamma, "Gamma KL term");
  out.total = out.recon - kl_weighted;
  return out;
}

ElboBreakdown summarize(std::span<const ElboTerms> samples) {
  if (samples.empty()) throw std::invalid_argument("summarize: no samples");
  ElboBreakdown b;
  double kl_gamma = 0.0;
  for (const auto& s : samples) {
    b.recon += s.recon.value().mean();
    b.kl_base += s.kl_base.value().mean();
    if (s.kl_gamma.valid()) kl_gamma += s.kl_gamma.value().mean();
    b.per_sample.push_back(s.total.value().mean());
  }
  const double J = static_cast<double>(samples.size());
  b.recon /= J;
  b.kl_base /= J;
  if (samples.front().kl_gamma.valid()) b.kl_gamma = kl_gamma / J;
  b.total = aggregate_avg(b.per_sample);
  return b;
}

double aggregate_avg(std::span<const double> losses) {
  if (losses.empty()) throw std::invalid_argument("aggregate_avg: empty list");
  double total = 0.0;
  for (double v : losses) total += v;
  return total / static_cast<double>(losses.size());
}

std::pair<double, std::size_t> aggregate_max(std::span<const double> losses) {
  if (losses.empty()) throw std::invalid_argument("aggregate_max: empty list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < losses.size(); ++i) {
    if (losses[i] > losses[best]) best = i;
  }
  return {losses[best], best};
}

Aggregate aggregate(std::span<const Tensor> totals, Sampling sampling) {
  if (totals.empty()) throw std::invalid_argument("aggregate: empty list");
  if (sampling == Sampling::max) {
    auto sel = select_max(totals);
    return {sel.value, std::move(sel.index)};
  }
  Tensor acc = totals[0];
  for (std::size_t j = 1; j < totals.size(); ++j) acc = acc + totals[j];
  return {scale(acc, 1.0 / static_cast<double>(totals.size())), {}};
}

namespace {

double log_sigmoid(double x) { return -(std::max(-x, 0.0) + std::log1p(std::exp(-std::abs(x)))); }

// Gauss-Legendre rule on [0, 8] (Golub-Welsch).
struct Quadrature {
  std::vector<double> nodes, weights;
};

const Quadrature& folded_normal_rule() {
  static const Quadrature rule = [] {
    const int n = 48;
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n; ++i) J(i, i - 1) = J(i - 1, i) = i / std::sqrt(4.0 * i * i - 1.0);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    Quadrature q;
    for (int i = 0; i < n; ++i) {
      const double e = 4.0 * (es.eigenvalues()(i) + 1.0);
      const double w = 8.0 * es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
      q.nodes.push_back(e);
      q.weights.push_back(w * 2.0 * std::exp(-0.5 * e * e) / std::sqrt(2.0 * M_PI));
    }
    return q;
  }();
  return rule;
}

// P(|s - mu| > lambda) for s ~ N(mu, sigma^2), lambda ~ Gamma(alpha, beta):
// E_e[P(lambda < sigma |e|)] over the folded standard normal.
double gamma_gaussian_keep(double sigma, double alpha, double beta) {
  const Quadrature& q = folded_normal_rule();
  double keep = 0.0;
  for (std::size_t i = 0; i < q.nodes.size(); ++i) keep += q.weights[i] * special::gamma_p(alpha, beta * sigma * q.nodes[i]);
  return std::clamp(keep, 0.0, 1.0);
}

// Base samples, thresholds and gates of one draw, all latent x n.
struct Draw {
  Matrix s;
  Matrix lambda;  // empty when fixed or unthresholded
  Matrix gate;    // spike_slab only
  Matrix z;
};

Draw draw(const EncoderConfig& cfg, const PosteriorValues& q, Rng& rng) {
  const Index d = q.latent_dim(), n = q.cols();
  Draw out;
  if (cfg.prior == PriorKind::spike_slab) {
    const Matrix l = logistic_noise(d, n, rng);
    const Matrix eps = standard_normal(d, n, rng);
    out.gate = ((q.spike_logit + l).array() > 0.0).cast<double>().matrix();
    out.s = q.shift + ((0.5 * q.log_scale.array()).exp() * eps.array()).matrix();
    out.z = out.gate.cwiseProduct(out.s);
    return out;
  }
  if (laplace_base(cfg.prior)) {
    const Matrix eps = uniform_open(d, n, -0.5, 0.5, rng);
    out.s.resize(d, n);
    for (Index i = 0; i < out.s.size(); ++i) {
      out.s(i) = laplace_from_uniform(eps(i), q.shift(i), std::exp(q.log_scale(i)));
    }
  } else {
    const Matrix eps = standard_normal(d, n, rng);
    out.s = q.shift + ((0.5 * q.log_scale.array()).exp() * eps.array()).matrix();
  }
  if (!is_thresholded(cfg.prior)) {
    out.z = out.s;
    return out;
  }
  out.z.resize(d, n);
  if (uses_gamma(cfg.prior)) {
    out.lambda.resize(d, n);
    for (Index i = 0; i < out.lambda.size(); ++i) {
      out.lambda(i) = draw_gamma(std::exp(q.log_alpha(i)), std::exp(q.log_beta(i)), rng);
    }
  }
  for (Index i = 0; i < out.z.size(); ++i) {
    const double lam = out.lambda.size() > 0 ? out.lambda(i) : cfg.lambda0;
    out.z(i) = shifted_soft_threshold(out.s(i), lam, q.shift(i));
  }
  return out;
}

}  // namespace

Matrix sample_codes(const EncoderConfig& config, const PosteriorValues& q, Rng& rng) {
  return draw(config, q, rng).z;
}

Matrix mean_codes(const EncoderConfig& config, const PosteriorValues& q) {
  const Index d = q.latent_dim(), n = q.cols();
  Matrix out(d, n);
  for (Index i = 0; i < out.size(); ++i) {
    const double mu = q.shift(i);
    double keep = 1.0;
    switch (config.prior) {
      case PriorKind::gaussian:
      case PriorKind::laplacian:
        break;
      case PriorKind::thresh_laplacian:
        keep = std::exp(-config.lambda0 / std::exp(q.log_scale(i)));
        break;
      case PriorKind::thresh_laplacian_gamma: {
        const double b = std::exp(q.log_scale(i));
        const double alpha = std::exp(q.log_alpha(i)), beta = std::exp(q.log_beta(i));
        keep = std::pow(beta / (beta + 1.0 / b), alpha);
        break;
      }
      case PriorKind::thresh_gaussian:
        keep = 1.0 - gaussian_spike_probability(config.lambda0, std::exp(0.5 * q.log_scale(i)));
        break;
      case PriorKind::thresh_gaussian_gamma: {
        keep = gamma_gaussian_keep(std::exp(0.5 * q.log_scale(i)), std::exp(q.log_alpha(i)), std::exp(q.log_beta(i)));
        break;
      }
      case PriorKind::spike_slab:
        keep = std::exp(log_sigmoid(q.spike_logit(i)));
        break;
    }
    out(i) = keep * mu;
  }
  return out;
}

Eigen::RowVectorXd iwae_bound(const EncoderConfig& config, const PosteriorValues& q, const Matrix& A,
                              const Matrix& x, int K, Rng& rng) {
  if (K < 1) throw std::invalid_argument("iwae_bound: K must be >= 1");
  if (x.cols() != q.cols() || A.cols() != q.latent_dim() || A.rows() != x.rows()) {
    throw ShapeError("iwae_bound: shape mismatch");
  }
  const Index d = q.latent_dim(), n = q.cols();
  const double scale0 = config.prior_base_scale();
  const bool laplace = laplace_base(config.prior);
  Matrix log_w(K, n);
  for (int k = 0; k < K; ++k) {
    const Draw s = draw(config, q, rng);
    Eigen::RowVectorXd lw = -(x - A * s.z).colwise().squaredNorm();
    for (Index c = 0; c < n; ++c) {
      double acc = 0.0;
      for (Index r = 0; r < d; ++r) {
        const double v = s.s(r, c), mu = q.shift(r, c), ls = q.log_scale(r, c);
        if (laplace) {
          acc += laplace_log_pdf(v, 0.0, scale0) - laplace_log_pdf(v, mu, std::exp(ls));
        } else {
          acc += gaussian_log_pdf(v, 0.0, scale0) - gaussian_log_pdf(v, mu, std::exp(0.5 * ls));
        }
        if (s.lambda.size() > 0) {
          const double lam = s.lambda(r, c);
          acc += special::gamma_log_pdf(lam, config.alpha0, config.beta0()) -
                 special::gamma_log_pdf(lam, std::exp(q.log_alpha(r, c)), std::exp(q.log_beta(r, c)));
        }
        if (s.gate.size() > 0) {
          const double l = q.spike_logit(r, c);
          const double l0 = std::log(config.spike_prior / (1.0 - config.spike_prior));
          acc += s.gate(r, c) > 0 ? log_sigmoid(l0) - log_sigmoid(l) : log_sigmoid(-l0) - log_sigmoid(-l);
        }
      }
      lw(c) += acc;
    }
    log_w.row(k) = lw;
  }
  if (!log_w.allFinite()) throw NumericalError("iwae_bound: non-finite importance weights");
  Eigen::RowVectorXd out(n);
  for (Index c = 0; c < n; ++c) {
    const double m = log_w.col(c).maxCoeff();
    out(c) = m + std::log((log_w.col(c).array() - m).exp().mean());
  }
  return out;
}

double iwae_loss(const EncoderConfig& config, const PosteriorValues& q, const Matrix& A, const Matrix& x, int K,
                 Rng& rng) {
  return -iwae_bound(config, q, A, x, K, rng).mean();
}

}  // namespace vsc
