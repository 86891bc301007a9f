// SPDX-License-Identifier: Apache-2.0
//
// Linear dictionary generator with log p(x|z) = -||x - A z||^2.

#pragma once

#include "vsc/tape.hpp"

#include <cstdint>

namespace vsc {

struct Dictionary {
  Matrix A;  // data_dim x latent_dim
  double kappa = 1e-4;

  Index data_dim() const { return A.rows(); }
  Index latent_dim() const { return A.cols(); }
};

/// Columns i.i.d. standard normal, then scaled to unit l2 norm.
Dictionary init_dictionary(Index data_dim, Index latent_dim, std::uint64_t seed, double kappa = 1e-4);

/// -||x_k - A z_k||^2 per column (1 x n).
template <class DA, class DX, class DZ>
Eigen::RowVectorXd log_likelihood_per_datum(const Eigen::MatrixBase<DA>& A, const Eigen::MatrixBase<DX>& X,
                                            const Eigen::MatrixBase<DZ>& Z) {
  if (A.cols() != Z.rows() || A.rows() != X.rows() || X.cols() != Z.cols()) {
    throw ShapeError("log_likelihood: shape mismatch");
  }
  return -(X - A * Z).colwise().squaredNorm();
}

/// Batch mean of the per-datum log-likelihood.
template <class DA, class DX, class DZ>
double log_likelihood(const Eigen::MatrixBase<DA>& A, const Eigen::MatrixBase<DX>& X,
                      const Eigen::MatrixBase<DZ>& Z) {
  if (X.cols() == 0) return 0.0;
  return log_likelihood_per_datum(A, X, Z).mean();
}

template <class DA>
double frobenius_penalty(const Eigen::MatrixBase<DA>& A, double kappa) {
  if (kappa < 0) throw std::invalid_argument("frobenius_penalty: kappa must be non-negative");
  return kappa * A.squaredNorm();
}

/// Tape versions. The per-datum form returns 1 x n.
Tensor log_likelihood_per_datum(const Tensor& A, const Tensor& x, const Tensor& z);
Tensor log_likelihood(const Tensor& A, const Tensor& x, const Tensor& z);
Tensor frobenius_penalty(const Tensor& A, double kappa);

}  // namespace vsc
