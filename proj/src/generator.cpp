// SPDX-License-Identifier: Apache-2.0

#include "vsc/generator.hpp"

#include "vsc/rng.hpp"

#include <stdexcept>

namespace vsc {

namespace {
constexpr std::uint64_t kDictionaryStream = 0xD1C7;
}

Dictionary init_dictionary(Index data_dim, Index latent_dim, std::uint64_t seed, double kappa) {
  if (data_dim < 1 || latent_dim < 1) throw std::invalid_argument("init_dictionary: dims must be >= 1");
  if (kappa < 0) throw std::invalid_argument("init_dictionary: kappa must be non-negative");
  Rng rng = make_stream(seed, kDictionaryStream);
  Matrix A = standard_normal(data_dim, latent_dim, rng);
  A.colwise().normalize();
  return {std::move(A), kappa};
}

Tensor log_likelihood_per_datum(const Tensor& A, const Tensor& x, const Tensor& z) {
  if (A.cols() != z.rows() || A.rows() != x.rows() || x.cols() != z.cols()) {
    throw ShapeError("log_likelihood: shape mismatch");
  }
  return -col_sum(square(x - linear(A, z)));
}

Tensor log_likelihood(const Tensor& A, const Tensor& x, const Tensor& z) {
  return scale(sum(log_likelihood_per_datum(A, x, z)), 1.0 / static_cast<double>(x.cols()));
}

Tensor frobenius_penalty(const Tensor& A, double kappa) {
  if (kappa < 0) throw std::invalid_argument("frobenius_penalty: kappa must be non-negative");
  return scale(sum(square(A)), kappa);
}

}  // namespace vsc
