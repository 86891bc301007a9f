// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace vsc {

using Rng = std::mt19937_64;

/// Independent stream derived from a seed and a purpose tag.
inline Rng make_stream(std::uint64_t seed, std::uint64_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose), static_cast<std::uint32_t>(purpose >> 32)};
  return Rng(seq);
}

inline Eigen::MatrixXd standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = n(rng);
  return m;
}

inline Eigen::MatrixXd uniform(Eigen::Index rows, Eigen::Index cols, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = u(rng);
  return m;
}

/// Uniform on the open interval (lo, hi).
inline Eigen::MatrixXd uniform_open(Eigen::Index rows, Eigen::Index cols, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    double v = u(rng);
    while (v <= lo) v = u(rng);
    m(i) = v;
  }
  return m;
}

/// Standard logistic noise log(u) - log(1 - u), the difference of two Gumbels.
inline Eigen::MatrixXd logistic_noise(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd u = uniform_open(rows, cols, 0.0, 1.0, rng);
  return (u.array().log() - (1.0 - u.array()).log()).matrix();
}

}  // namespace vsc
