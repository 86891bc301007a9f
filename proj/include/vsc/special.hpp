// SPDX-License-Identifier: Apache-2.0
//
// Scalar special functions used by the Gamma machinery.

#pragma once

#include <unsupported/Eigen/SpecialFunctions>

#include <cmath>

namespace vsc::special {

template <class Scalar>
Scalar digamma(Scalar x) {
  return Eigen::numext::digamma(x);
}

template <class Scalar>
Scalar trigamma(Scalar x) {
  return Eigen::numext::polygamma(Scalar(1), x);
}

template <class Scalar>
Scalar lgamma(Scalar x) {
  return std::lgamma(x);
}

/// Regularized lower incomplete gamma P(a, x).
template <class Scalar>
Scalar gamma_p(Scalar a, Scalar x) {
  return Eigen::numext::igamma(a, x);
}

/// Log density of Gamma(shape alpha, rate beta) at z > 0.
template <class Scalar>
Scalar gamma_log_pdf(Scalar z, Scalar alpha, Scalar beta) {
  return alpha * std::log(beta) + (alpha - 1) * std::log(z) - beta * z - std::lgamma(alpha);
}

}  // namespace vsc::special
