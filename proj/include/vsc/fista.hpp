// SPDX-License-Identifier: Apache-2.0
//
// MAP sparse coding with FISTA and alternating dictionary learning for
//   min_A  mean_k ||x_k - A z_k||^2 + lambda ||z_k||_1 + kappa ||A||_F^2.

#pragma once

#include "vsc/generator.hpp"
#include "vsc/rng.hpp"
#include "vsc/tape.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

namespace vsc {

struct FistaConfig {
  double lambda = 20.0;
  double kappa = 1e-3;
  int max_iters = 200;
  /// Relative change of the batch objective that stops the iteration.
  double tol = 1e-6;
  /// Warm-up factor on lambda: omega = min(start + step * t, 1).
  double warmup_start = 0.1;
  double warmup_step = 1e-4;

  double omega(long iteration) const {
    return std::min(warmup_start + warmup_step * static_cast<double>(iteration), 1.0);
  }
  void validate() const;
};

/// Per-column objective ||x - A z||^2 + lambda ||z||_1 (1 x n).
template <class DA, class DX, class DZ>
Eigen::RowVectorXd sparse_objective(const Eigen::MatrixBase<DA>& A, const Eigen::MatrixBase<DX>& X,
                                    const Eigen::MatrixBase<DZ>& Z, double lambda) {
  if (A.cols() != Z.rows() || A.rows() != X.rows() || X.cols() != Z.cols()) {
    throw ShapeError("sparse_objective: shape mismatch");
  }
  return (X - A * Z).colwise().squaredNorm() + lambda * Z.cwiseAbs().colwise().sum();
}

/// Mean per-column objective plus kappa ||A||_F^2.
template <class DA, class DX, class DZ>
double dictionary_objective(const Eigen::MatrixBase<DA>& A, const Eigen::MatrixBase<DX>& X,
                            const Eigen::MatrixBase<DZ>& Z, double lambda, double kappa) {
  const double data = X.cols() > 0 ? sparse_objective(A, X, Z, lambda).mean() : 0.0;
  return data + kappa * A.squaredNorm();
}

/// Largest eigenvalue of A^T A by power iteration from a fixed start vector.
template <class DA>
double top_eigenvalue_ata(const Eigen::MatrixBase<DA>& A, int iters = 20, double tol = 1e-6) {
  using Vec = Eigen::VectorXd;
  Rng rng = make_stream(0, 0x9E1);
  Vec v = standard_normal(A.cols(), 1, rng);
  v.normalize();
  double estimate = 0.0;
  for (int i = 0; i < iters; ++i) {
    Vec w = A.transpose() * (A * v);
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    const double next = v.dot(w);
    v = w / norm;
    if (std::abs(next - estimate) <= tol * std::max(1.0, std::abs(next))) {
      estimate = next;
      break;
    }
    estimate = next;
  }
  return estimate;
}

/// Lipschitz constant 2 * lambda_max(A^T A) of the smooth term's gradient,
/// inflated by 5% so the step 1/L stays below the true bound.
template <class DA>
double fista_lipschitz(const Eigen::MatrixBase<DA>& A) {
  return 1.05 * 2.0 * top_eigenvalue_ata(A);
}

struct FistaResult {
  Matrix Z;
  int iterations = 0;
  double objective = 0.0;  // mean per-column objective at Z
};

/// FISTA on all columns of X at once. The momentum sequence does not depend
/// on the data, so this equals running each column separately with the same
/// iteration count. `Z0` optionally warm-starts the iterate.
template <class DA, class DX>
FistaResult fista_infer(const Eigen::MatrixBase<DA>& A, const Eigen::MatrixBase<DX>& X, double lambda,
                        int max_iters, double tol, const Matrix* Z0 = nullptr,
                        std::optional<double> lipschitz = std::nullopt) {
  if (A.rows() != X.rows()) throw ShapeError("fista_infer: A and X disagree on the data dimension");
  if (lambda < 0) throw std::invalid_argument("fista_infer: lambda must be non-negative");
  if (max_iters < 1) throw std::invalid_argument("fista_infer: max_iters must be >= 1");
  const Index d = A.cols(), n = X.cols();
  FistaResult out;
  out.Z = Z0 ? *Z0 : Matrix::Zero(d, n);
  if (out.Z.rows() != d || out.Z.cols() != n) throw ShapeError("fista_infer: warm start shape");
  if (n == 0) return out;

  const double L = lipschitz ? *lipschitz : fista_lipschitz(A);
  if (!(L > 0)) {
    // A = 0: the smooth term is constant and the minimizer is z = 0.
    out.Z.setZero();
    out.objective = sparse_objective(A, X, out.Z, lambda).mean();
    return out;
  }
  const double step = 1.0 / L;
  const double shrink = lambda * step;
  const Matrix AtA = A.transpose() * A;
  const Matrix AtX = A.transpose() * X;

  Matrix y = out.Z;
  Matrix z_prev = out.Z;
  double t = 1.0;
  double prev = sparse_objective(A, X, out.Z, lambda).mean();
  for (int it = 1; it <= max_iters; ++it) {
    const Matrix grad = 2.0 * (AtA * y - AtX);
    out.Z = (y - step * grad).unaryExpr([shrink](double v) {
      return v > shrink ? v - shrink : (v < -shrink ? v + shrink : 0.0);
    });
    if (!out.Z.allFinite()) throw NumericalError("fista_infer: non-finite iterate");
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = out.Z + ((t - 1.0) / t_next) * (out.Z - z_prev);
    z_prev = out.Z;
    t = t_next;
    out.iterations = it;
    const double obj = sparse_objective(A, X, out.Z, lambda).mean();
    const bool done = std::abs(prev - obj) <= tol * std::max(1.0, std::abs(obj));
    prev = obj;
    if (done) break;
  }
  out.objective = prev;
  return out;
}

struct FistaTrainConfig {
  int epochs = 300;
  Index batch_size = 100;
  double dict_lr = 0.5;
  double dict_lr_decay = 0.99;
  std::uint64_t seed = 0;
  /// Reuse each datum's previous code as the FISTA starting point.
  bool warm_start = true;
};

struct FistaEpochLog {
  int epoch = 0;
  long iteration = 0;
  double train_objective = 0.0;
  double lambda_effective = 0.0;
  double dict_lr = 0.0;
  double nonzero_fraction = 0.0;
  double dict_norm = 0.0;
};

struct FistaRun {
  Dictionary dict;
  std::vector<FistaEpochLog> log;
};

/// Alternates FISTA inference (lambda scaled by the warm-up omega) with one
/// gradient step on A per batch. `init` overrides the unit-norm random start.
FistaRun fista_dictionary_learn(const Matrix& X, const FistaConfig& config, const FistaTrainConfig& train,
                                Index latent_dim, const Dictionary* init = nullptr,
                                const std::function<void(const FistaEpochLog&)>& on_epoch = {});

}  // namespace vsc
