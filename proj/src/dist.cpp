// SPDX-License-Identifier: Apache-2.0

#include "vsc/dist.hpp"

#include <array>
#include <limits>
#include <string>

namespace vsc {

double draw_gamma(double alpha, double beta, Rng& rng) {
  if (!(alpha > 0) || !(beta > 0)) throw std::invalid_argument("draw_gamma: parameters must be positive");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (alpha < 1.0) {
    double u = unif(rng);
    while (u <= 0.0) u = unif(rng);
    const double boosted = draw_gamma(alpha + 1.0, beta, rng);
    return std::max(boosted * std::pow(u, 1.0 / alpha), std::numeric_limits<double>::min());
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  const double d = alpha - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  constexpr int kMaxTries = 10000;
  for (int attempt = 0; attempt < kMaxTries; ++attempt) {
    const double x = normal(rng);
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = unif(rng);
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v / beta;
    if (u > 0.0 && std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v / beta;
  }
  throw NumericalError("draw_gamma: rejection sampler failed for alpha=" + std::to_string(alpha));
}

double gamma_sample_grad_alpha(double z, double alpha, double beta) {
  double h = 1e-4 * std::max(1.0, alpha);
  h = std::min(h, 0.5 * alpha);
  const double x = beta * z;
  const double dF = (special::gamma_p(alpha + h, x) - special::gamma_p(alpha - h, x)) / (2.0 * h);
  const double pdf = std::exp(special::gamma_log_pdf(z, alpha, beta));
  const double g = -dF / pdf;
  // Far in the tails both terms underflow; the path is locally flat there.
  return std::isfinite(g) ? g : 0.0;
}

double gamma_quantile(double u, double alpha, double beta) {
  if (!(u > 0.0 && u < 1.0)) throw std::invalid_argument("gamma_quantile: u must lie in (0, 1)");
  double lo = 0.0;
  double hi = std::max(1.0, alpha);
  while (special::gamma_p(alpha, hi) < u) hi *= 2.0;
  double x = std::clamp(alpha, lo + 1e-300, hi);
  for (int it = 0; it < 300; ++it) {
    const double f = special::gamma_p(alpha, x) - u;
    if (f > 0) hi = x; else lo = x;
    const double pdf = std::exp((alpha - 1.0) * std::log(x) - x - std::lgamma(alpha));
    double next = pdf > 0 ? x - f / pdf : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 1e-16 * x) {
      x = next;
      break;
    }
    x = next;
  }
  return x / beta;
}

namespace {

Tensor like(const Tensor& ref, Matrix m) { return ref.tape().constant(std::move(m)); }

// Broadcasts a 1x1 value to rows x cols for scalar-level evaluation.
double at(const Matrix& m, Index i) { return m.size() == 1 ? m(0, 0) : m(i); }

}  // namespace

Tensor shifted_soft_threshold(const Tensor& s, const Tensor& lambda, const Tensor& mu) {
  const Matrix& sv = s.value();
  const Matrix& lv = lambda.value();
  const Matrix& mv = mu.value();
  if ((lv.size() != 1 && (lv.rows() != sv.rows() || lv.cols() != sv.cols())) ||
      (mv.size() != 1 && (mv.rows() != sv.rows() || mv.cols() != sv.cols()))) {
    throw ShapeError("shifted_soft_threshold: lambda/mu must match s or be scalar");
  }
  if (lv.minCoeff() < 0.0) throw std::invalid_argument("shifted_soft_threshold: negative threshold");
  Matrix z(sv.rows(), sv.cols());
  Matrix ds = Matrix::Zero(sv.rows(), sv.cols());
  Matrix dl = Matrix::Zero(sv.rows(), sv.cols());
  for (Index i = 0; i < sv.size(); ++i) {
    const double l = at(lv, i);
    const double m = at(mv, i);
    const double d = sv(i) - m;
    z(i) = shifted_soft_threshold(sv(i), l, m);
    if (std::abs(d) > l) {
      ds(i) = 1.0;
      dl(i) = d > 0 ? -1.0 : 1.0;
    }
  }
  const std::array<Tensor, 2> parents{s, lambda};
  return elementwise_custom("shifted_soft_threshold", std::move(z), parents, {std::move(ds), std::move(dl)});
}

Tensor st_threshold(const Tensor& s, const Tensor& lambda, const Tensor& mu) {
  Tensor frozen = stop_gradient(s);
  return s + shifted_soft_threshold(frozen, lambda, mu) - frozen;
}

Tensor sample_gaussian(const GaussianParams& p, const Matrix& eps) {
  if (eps.rows() != p.mu.rows() || eps.cols() != p.mu.cols()) throw ShapeError("sample_gaussian: noise shape");
  Tensor sigma = exp(scale(p.log_var, 0.5));
  return sigma * like(p.mu, eps) + p.mu;
}

Tensor kl_gaussian(const GaussianParams& p, double sigma0) {
  if (!(sigma0 > 0)) throw std::invalid_argument("kl_gaussian: sigma0 must be positive");
  const double inv = 1.0 / (2.0 * sigma0 * sigma0);
  Tensor quad = scale(square(p.mu) + exp(p.log_var), inv);
  return quad - scale(p.log_var, 0.5) + (std::log(sigma0) - 0.5);
}

Tensor sample_laplacian(const LaplacianParams& p, const Matrix& eps) {
  if (eps.rows() != p.mu.rows() || eps.cols() != p.mu.cols()) throw ShapeError("sample_laplacian: noise shape");
  if (eps.size() > 0 && eps.cwiseAbs().maxCoeff() >= 0.5) {
    throw std::invalid_argument("sample_laplacian: |eps| must be < 1/2");
  }
  // Unit-scale offset at zero shift; scaled by b and shifted by mu on the tape.
  Matrix unit = eps.unaryExpr([](double e) { return laplace_from_uniform(e, 0.0, 1.0); });
  return exp(p.log_b) * like(p.mu, std::move(unit)) + p.mu;
}

Tensor kl_laplacian(const LaplacianParams& p, double b0) {
  if (!(b0 > 0)) throw std::invalid_argument("kl_laplacian: b0 must be positive");
  Tensor am = abs(p.mu);
  Tensor b = exp(p.log_b);
  Tensor tail = b * exp(-(am / b));
  return scale(am + tail, 1.0 / b0) - p.log_b + (std::log(b0) - 1.0);
}

namespace {

Tensor gamma_node(const GammaParams& p, Matrix z) {
  Tape& t = p.log_alpha.tape();
  const std::size_t ia = p.log_alpha.id(), ib = p.log_beta.id();
  Matrix zc = z;
  // The implicit alpha-derivative needs two incomplete-gamma evaluations per
  // entry, so it is only evaluated where the incoming adjoint is nonzero.
  return t.record(OpKind::custom, "sample_gamma", std::move(z), {p.log_alpha, p.log_beta},
                  [&t, ia, ib, zc = std::move(zc)](const Matrix& g, std::size_t k) {
                    Matrix out = Matrix::Zero(g.rows(), g.cols());
                    if (k == 1) return Matrix((-g.array() * zc.array()).matrix());
                    const Matrix& la = t.value(ia);
                    const Matrix& lb = t.value(ib);
                    for (Index i = 0; i < g.size(); ++i) {
                      if (g(i) == 0.0) continue;
                      const double alpha = std::exp(la(i));
                      out(i) = g(i) * gamma_sample_grad_alpha(zc(i), alpha, std::exp(lb(i))) * alpha;
                    }
                    return out;
                  });
}

}  // namespace

Tensor sample_gamma(const GammaParams& p, Rng& rng) {
  if (p.log_alpha.rows() != p.log_beta.rows() || p.log_alpha.cols() != p.log_beta.cols()) {
    throw ShapeError("sample_gamma: alpha/beta shape mismatch");
  }
  const Matrix& la = p.log_alpha.value();
  const Matrix& lb = p.log_beta.value();
  Matrix z(la.rows(), la.cols());
  for (Index i = 0; i < z.size(); ++i) z(i) = draw_gamma(std::exp(la(i)), std::exp(lb(i)), rng);
  return gamma_node(p, std::move(z));
}

Tensor gamma_from_uniform(const GammaParams& p, const Matrix& u) {
  const Matrix& la = p.log_alpha.value();
  const Matrix& lb = p.log_beta.value();
  if (u.rows() != la.rows() || u.cols() != la.cols()) throw ShapeError("gamma_from_uniform: noise shape");
  Matrix z(la.rows(), la.cols());
  for (Index i = 0; i < z.size(); ++i) z(i) = gamma_quantile(u(i), std::exp(la(i)), std::exp(lb(i)));
  return gamma_node(p, std::move(z));
}

Tensor kl_gamma(const GammaParams& p, double alpha0, double beta0) {
  if (!(alpha0 > 0) || !(beta0 > 0)) throw std::invalid_argument("kl_gamma: prior parameters must be positive");
  Tensor alpha = exp(p.log_alpha);
  Tensor beta = exp(p.log_beta);
  const Matrix& av = alpha.value();
  const Matrix& bv = beta.value();
  Matrix value(av.rows(), av.cols()), da(av.rows(), av.cols()), db(av.rows(), av.cols());
  for (Index i = 0; i < av.size(); ++i) {
    const double a = av(i), b = bv(i);
    value(i) = kl_gamma(a, b, alpha0, beta0);
    da(i) = (a - alpha0) * special::trigamma(a) + beta0 / b - 1.0;
    db(i) = alpha0 / b - a * beta0 / (b * b);
  }
  const std::array<Tensor, 2> parents{alpha, beta};
  return elementwise_custom("kl_gamma", std::move(value), parents, {std::move(da), std::move(db)});
}

Tensor sample_spike_slab(const SpikeSlabParams& p, const Matrix& eps_logistic, const Matrix& eps_normal) {
  if (!(p.temperature > 0)) throw std::invalid_argument("sample_spike_slab: temperature must be positive");
  Tape& t = p.spike_logit.tape();
  Tensor soft = sigmoid(scale(p.spike_logit + t.constant(eps_logistic), 1.0 / p.temperature));
  Matrix hard = (soft.value().array() > 0.5).cast<double>().matrix();
  Tensor gate = soft + stop_gradient(t.constant(std::move(hard)) - soft);
  return gate * sample_gaussian(p.slab, eps_normal);
}

Tensor kl_spike_slab(const SpikeSlabParams& p, double gamma0, double sigma0) {
  if (!(gamma0 > 0 && gamma0 < 1)) throw std::invalid_argument("kl_spike_slab: gamma0 must lie in (0, 1)");
  const Tensor& l = p.spike_logit;
  Tensor gamma = sigmoid(l);
  Tensor log_gamma = -softplus(-l);
  Tensor log_one_minus = -softplus(l);
  Tensor one_minus = sigmoid(-l);
  Tensor slab_term = gamma * kl_gaussian(p.slab, sigma0);
  Tensor on = gamma * (log_gamma - std::log(gamma0));
  Tensor off = one_minus * (log_one_minus - std::log1p(-gamma0));
  return slab_term + on + off;
}

}  // namespace vsc
