// SPDX-License-Identifier: Apache-2.0

#include "vsc/encoder.hpp"

#include "vsc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace vsc {

namespace {

constexpr struct {
  PriorKind kind;
  std::string_view name;
} kPriorNames[] = {
    {PriorKind::gaussian, "gaussian"},
    {PriorKind::laplacian, "laplacian"},
    {PriorKind::thresh_gaussian, "thresh_gaussian"},
    {PriorKind::thresh_laplacian, "thresh_laplacian"},
    {PriorKind::thresh_gaussian_gamma, "thresh_gaussian_gamma"},
    {PriorKind::thresh_laplacian_gamma, "thresh_laplacian_gamma"},
    {PriorKind::spike_slab, "spike_slab"},
};

constexpr std::uint64_t kEncoderStream = 0xE1C0DE;

}  // namespace

std::string_view to_string(PriorKind kind) {
  for (const auto& entry : kPriorNames) {
    if (entry.kind == kind) return entry.name;
  }
  return "unknown";
}

PriorKind parse_prior_kind(std::string_view name) {
  for (const auto& entry : kPriorNames) {
    if (entry.name == name) return entry.kind;
  }
  throw std::invalid_argument("unknown prior kind '" + std::string(name) + "'");
}

std::vector<Index> EncoderConfig::scaled_hidden(Index latent_dim) {
  return {2 * latent_dim, 4 * latent_dim, 2 * latent_dim, latent_dim};
}

void EncoderConfig::validate() const {
  if (input_dim < 1) throw std::invalid_argument("encoder: input_dim must be >= 1");
  if (latent_dim < 1) throw std::invalid_argument("encoder: latent_dim must be >= 1");
  if (hidden.empty()) throw std::invalid_argument("encoder: backbone needs at least one hidden layer");
  for (Index h : hidden) {
    if (h < 1) throw std::invalid_argument("encoder: hidden widths must be >= 1");
  }
  if (!(prior_scale > 0)) throw std::invalid_argument("encoder: prior_scale must be positive");
  if (lambda0 < 0) throw std::invalid_argument("encoder: lambda0 must be non-negative");
  if (uses_gamma(prior) && !(lambda0 > 0)) throw std::invalid_argument("encoder: gamma prior needs lambda0 > 0");
  if (!(alpha0 > 0)) throw std::invalid_argument("encoder: alpha0 must be positive");
  if (!(spike_prior > 0 && spike_prior < 1)) throw std::invalid_argument("encoder: spike_prior must lie in (0, 1)");
}

double EncoderConfig::prior_base_scale() const {
  return laplace_base(prior) ? prior_scale : std::sqrt(prior_scale);
}

WarmupState WarmupState::at(long iteration) {
  const double t = static_cast<double>(iteration);
  WarmupState w;
  w.iteration = iteration;
  w.omega = std::min(0.1 + 2e-4 * t, 1.0);
  w.tau = std::max(std::pow(0.9995, t), 0.5);
  w.kl_ramp = std::clamp(2e-4 * (t - 1500.0), 0.0, 1.0);
  return w;
}

void ParameterSet::add(std::string name, Matrix value) {
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
}

std::size_t ParameterSet::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

Index ParameterSet::total_size() const {
  Index n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

std::vector<Tensor> ParameterSet::bind(Tape& tape, bool trainable) const {
  std::vector<Tensor> out;
  out.reserve(values_.size());
  for (const auto& v : values_) out.push_back(trainable ? tape.leaf(v) : tape.constant(v));
  return out;
}

namespace {

std::vector<std::string> head_names(PriorKind prior) {
  std::vector<std::string> heads{"shift", "log_scale"};
  if (uses_gamma(prior)) {
    heads.emplace_back("log_alpha");
    heads.emplace_back("log_beta");
  }
  if (prior == PriorKind::spike_slab) heads.emplace_back("spike_logit");
  return heads;
}

}  // namespace

Encoder init_encoder(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng = make_stream(seed, kEncoderStream);
  Encoder enc{config, {}};
  auto dense = [&](const std::string& prefix, Index in, Index out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    enc.params.add(prefix + ".weight", uniform(out, in, -bound, bound, rng));
    enc.params.add(prefix + ".bias", uniform(out, 1, -bound, bound, rng));
  };
  Index width = config.input_dim;
  for (std::size_t i = 0; i < config.hidden.size(); ++i) {
    dense("backbone." + std::to_string(i), width, config.hidden[i]);
    width = config.hidden[i];
  }
  for (const auto& head : head_names(config.prior)) dense("head." + head, width, config.latent_dim);

  auto set_bias = [&](const std::string& head, double value) {
    enc.params[enc.params.index_of("head." + head + ".bias")].setConstant(value);
  };
  // log b for Laplacian bases, log sigma^2 for Gaussian ones; both equal log(prior_scale).
  set_bias("log_scale", std::log(config.prior_scale));
  if (uses_gamma(config.prior)) {
    set_bias("log_alpha", std::log(config.alpha0));
    set_bias("log_beta", std::log(config.beta0()));
  }
  if (config.prior == PriorKind::spike_slab) {
    set_bias("spike_logit", std::log(config.spike_prior / (1.0 - config.spike_prior)));
  }
  return enc;
}

PosteriorParams encode(std::span<const Tensor> params, const Tensor& x, const EncoderConfig& config,
                       const WarmupState& warmup) {
  if (x.rows() != config.input_dim) {
    throw ShapeError("encode: expected " + std::to_string(config.input_dim) + " input rows, got " +
                     std::to_string(x.rows()));
  }
  const std::size_t n_backbone = config.hidden.size();
  const std::size_t n_heads = head_names(config.prior).size();
  if (params.size() != 2 * (n_backbone + n_heads)) throw std::invalid_argument("encode: parameter count mismatch");

  Tensor h = x;
  for (std::size_t i = 0; i < n_backbone; ++i) {
    h = relu(add_bias(linear(params[2 * i], h), params[2 * i + 1]));
  }
  auto head = [&](std::size_t k) {
    const std::size_t base = 2 * (n_backbone + k);
    return add_bias(linear(params[base], h), params[base + 1]);
  };

  PosteriorParams out;
  out.shift = head(0);
  out.log_scale = head(1);
  if (config.prior != PriorKind::spike_slab && warmup.omega != 1.0) {
    const double log_omega = std::log(warmup.omega);
    out.log_scale = out.log_scale + (laplace_base(config.prior) ? log_omega : 2.0 * log_omega);
  }
  if (uses_gamma(config.prior)) {
    // Clamping exp(h) to [1e-6, 1e6] is the same map as clamping h in log space.
    const double lo = std::log(kGammaParamMin), hi = std::log(kGammaParamMax);
    out.log_alpha = clamp(head(2), lo, hi);
    out.log_beta = clamp(head(3), lo, hi);
  }
  if (config.prior == PriorKind::spike_slab) out.spike_logit = head(2);
  return out;
}

PosteriorValues infer_posterior(const Encoder& encoder, const Matrix& x, const WarmupState& warmup, Index chunk) {
  if (chunk < 1) throw std::invalid_argument("infer_posterior: chunk must be >= 1");
  const auto& cfg = encoder.config;
  const Index n = x.cols();
  const Index d = cfg.latent_dim;
  const bool gamma = uses_gamma(cfg.prior);
  const bool spike = cfg.prior == PriorKind::spike_slab;
  PosteriorValues out;
  out.shift.resize(d, n);
  out.log_scale.resize(d, n);
  if (gamma) {
    out.log_alpha.resize(d, n);
    out.log_beta.resize(d, n);
  }
  if (spike) out.spike_logit.resize(d, n);
  for (Index start = 0; start < n; start += chunk) {
    const Index m = std::min(chunk, n - start);
    Tape tape;
    const auto params = encoder.params.bind(tape, false);
    const auto q = encode(params, tape.constant(x.middleCols(start, m)), cfg, warmup);
    out.shift.middleCols(start, m) = q.shift.value();
    out.log_scale.middleCols(start, m) = q.log_scale.value();
    if (gamma) {
      out.log_alpha.middleCols(start, m) = q.log_alpha.value();
      out.log_beta.middleCols(start, m) = q.log_beta.value();
    }
    if (spike) out.spike_logit.middleCols(start, m) = q.spike_logit.value();
  }
  return out;
}

}  // namespace vsc
