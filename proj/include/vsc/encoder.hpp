// SPDX-License-Identifier: Apache-2.0
//
// Amortized inference network: an MLP backbone (Linear -> ReLU, four times)
// followed by one linear projection head per posterior parameter.

#pragma once

#include "vsc/dist.hpp"
#include "vsc/tape.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace vsc {

enum class PriorKind {
  gaussian,
  laplacian,
  thresh_gaussian,
  thresh_laplacian,
  thresh_gaussian_gamma,
  thresh_laplacian_gamma,
  spike_slab,
};

std::string_view to_string(PriorKind kind);
PriorKind parse_prior_kind(std::string_view name);

constexpr bool is_thresholded(PriorKind k) {
  return k == PriorKind::thresh_gaussian || k == PriorKind::thresh_laplacian ||
         k == PriorKind::thresh_gaussian_gamma || k == PriorKind::thresh_laplacian_gamma;
}
constexpr bool uses_gamma(PriorKind k) {
  return k == PriorKind::thresh_gaussian_gamma || k == PriorKind::thresh_laplacian_gamma;
}
constexpr bool laplace_base(PriorKind k) {
  return k == PriorKind::laplacian || k == PriorKind::thresh_laplacian || k == PriorKind::thresh_laplacian_gamma;
}

struct EncoderConfig {
  Index input_dim = 256;
  std::vector<Index> hidden{512, 1024, 512, 256};
  Index latent_dim = 256;
  PriorKind prior = PriorKind::thresh_laplacian;
  /// Prior scale b0 for Laplacian bases and prior variance sigma0^2 for
  /// Gaussian bases (including the spike-and-slab slab).
  double prior_scale = 0.1;
  double lambda0 = 0.25;
  double alpha0 = 3.0;
  /// Prior slab probability for the spike-and-slab baseline.
  double spike_prior = 0.1;

  /// Backbone widths keeping the 2:4:2:1 ratios to the latent size.
  static std::vector<Index> scaled_hidden(Index latent_dim);
  double beta0() const { return alpha0 / lambda0; }
  /// b0 for Laplacian bases, sigma0 for Gaussian bases.
  double prior_base_scale() const;
  void validate() const;
};

/// Per-iteration schedules: scale warm-up omega, Gumbel temperature tau and
/// the spike-and-slab KL ramp.
struct WarmupState {
  double omega = 0.1;
  double tau = 1.0;
  double kl_ramp = 0.0;
  long iteration = 0;

  static WarmupState at(long iteration);
  /// All schedules at their end values.
  static WarmupState settled() { return {1.0, 0.5, 1.0, 0}; }
  void advance() { *this = at(iteration + 1); }
};

/// Ordered named parameter tensors.
class ParameterSet {
 public:
  void add(std::string name, Matrix value);
  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Matrix& operator[](std::size_t i) { return values_[i]; }
  const Matrix& operator[](std::size_t i) const { return values_[i]; }
  std::size_t index_of(std::string_view name) const;
  const Matrix& get(std::string_view name) const { return values_[index_of(name)]; }
  Index total_size() const;

  /// Registers every parameter on the tape, as leaves or as constants.
  std::vector<Tensor> bind(Tape& tape, bool trainable) const;

  bool operator==(const ParameterSet&) const = default;

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
};

struct Encoder {
  EncoderConfig config;
  ParameterSet params;
};

/// Fan-in uniform init U(-1/sqrt(fan_in), 1/sqrt(fan_in)); head biases for the
/// scale, Gamma and spike parameters start at their prior values.
Encoder init_encoder(const EncoderConfig& config, std::uint64_t seed);

/// Encoder outputs for a batch (each latent_dim x batch). The scale head is
/// already multiplied by the warm-up omega; `log_scale` is log_var (2 log sigma)
/// for Gaussian bases and log b for Laplacian bases.
struct PosteriorParams {
  Tensor shift;
  Tensor log_scale;
  Tensor log_alpha;    // gamma variants only
  Tensor log_beta;     // gamma variants only
  Tensor spike_logit;  // spike_slab only

  GaussianParams gaussian() const { return {shift, log_scale}; }
  LaplacianParams laplacian() const { return {shift, log_scale}; }
  GammaParams gamma() const { return {log_alpha, log_beta}; }
};

/// Forward pass. `x` is input_dim x batch; `params` comes from
/// ParameterSet::bind in the same order as the encoder's ParameterSet.
PosteriorParams encode(std::span<const Tensor> params, const Tensor& x, const EncoderConfig& config,
                       const WarmupState& warmup);

/// Plain-matrix encoder outputs for evaluation. Unused heads are empty.
struct PosteriorValues {
  Matrix shift;
  Matrix log_scale;
  Matrix log_alpha;
  Matrix log_beta;
  Matrix spike_logit;

  Index latent_dim() const { return shift.rows(); }
  Index cols() const { return shift.cols(); }
};

/// Runs encode() without recording gradients, in column chunks of `chunk`.
PosteriorValues infer_posterior(const Encoder& encoder, const Matrix& x, const WarmupState& warmup,
                                Index chunk = 512);

}  // namespace vsc
