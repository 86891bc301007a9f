// SPDX-License-Identifier: Apache-2.0
//
// Evaluation metrics for trained sparse coding models.

#pragma once

#include "vsc/encoder.hpp"
#include "vsc/fista.hpp"
#include "vsc/objective.hpp"
#include "vsc/rng.hpp"
#include "vsc/tape.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace vsc {

struct VariationalModel;

/// mean_k ||x_k - A z_k||^2 + lambda ||z_k||_1, plus kappa ||A||_F^2.
double validation_loss(const Matrix& A, const Matrix& Z, const Matrix& X, double lambda = 20.0, double kappa = 0.0);

// ---------------------------------------------------------------------------
// Multi-information.

/// Exact k-nearest-neighbour distances (Euclidean) of every column of `points`
/// among the other columns.
std::vector<double> knn_distances(const Matrix& points, int k);

/// Kozachenko-Leonenko differential entropy estimate in nats.
double kl_entropy(const Matrix& points, int k = 3);

struct MultiInformation {
  double value = 0.0;  // nats
  std::vector<Index> excluded;  // constant dimensions
};

/// sum_i h(z_i) - h(z) for codes Z (d x n). Exact zeros are dequantized with
/// uniform noise of width 1e-4 times the dimension's range.
MultiInformation multi_information(const Matrix& Z, int k = 3, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Gradient signal-to-noise ratio.

struct SnrResult {
  double snr = 0.0;  // NaN when every coordinate was excluded
  Index used = 0;
  Index excluded = 0;  // std < 1e-12
};

/// Mean over coordinates of |mean| / std of S gradient draws (population std).
/// `draw(s)` returns the flattened gradient for draw s.
SnrResult grad_snr(const std::function<Vector(int)>& draw, int S);

struct ModelSnr {
  SnrResult encoder;
  SnrResult generator;
};

struct SnrOptions {
  int draws = 1000;  // S
  int samples = 1;   // J of the gradient estimator
  Sampling sampling = Sampling::max;
  ObjectiveConfig objective;
  std::uint64_t seed = 0;
};

/// SNR of the training-loss gradient on fixed data `x` over independent
/// posterior noise draws.
ModelSnr model_grad_snr(const VariationalModel& model, const Matrix& x, const SnrOptions& opts);

// ---------------------------------------------------------------------------
// Support consistency and collapse.

/// |S1 & S2| / |S1 | S2|; two empty supports score 1.
double jaccard_index(const std::vector<Index>& a, const std::vector<Index>& b);

struct JaccardResult {
  double mean = 0.0;
  Eigen::RowVectorXd per_datum;
};

/// For each column, draws J codes, keeps dimensions whose dictionary column
/// has ||a_i||^2 > norm_threshold, and averages the index over sample pairs.
JaccardResult jaccard_consistency(const EncoderConfig& config, const PosteriorValues& q, const Matrix& A, int J,
                                  Rng& rng, double norm_threshold = 1e-1);

/// Counts of values in [0, 1] per equal-width bin.
std::vector<Index> histogram01(const Eigen::RowVectorXd& values, int bins = 10);

struct CollapseMetrics {
  double posterior_collapse_pct = 0.0;
  double feature_collapse_pct = 0.0;
};

/// A dimension is posterior-collapsed when KL(q(s_i|x) || p(s_i)) <= eps for at
/// least a (1 - delta) fraction of the data, and feature-collapsed when the
/// posterior-mean code satisfies |z_i| <= eps for that fraction.
CollapseMetrics collapse_metrics(const EncoderConfig& config, const PosteriorValues& q, double eps = 1e-2,
                                 double delta = 5e-2);

/// Per-dimension, per-datum base KL (latent x n) used by collapse_metrics.
Matrix base_kl(const EncoderConfig& config, const PosteriorValues& q);

// ---------------------------------------------------------------------------
// Dictionary analysis.

/// (X Z^T)(Z Z^T + ridge I)^-1 via a Cholesky solve.
Matrix estimate_dictionary(const Matrix& X, const Matrix& Z, double ridge = 1e-6);

/// (M1 - M0) / s_N * sqrt(n1 n0) / N with the population std s_N.
double point_biserial(const std::vector<int>& y, const Eigen::VectorXd& z);

struct AtomMatch {
  Index matched = 0;
  std::vector<double> cosines;  // |cos| of each greedy pair, descending
};

/// Greedy one-to-one matching of truth columns to learned columns by |cosine|;
/// counts pairs above `threshold`.
AtomMatch match_atoms(const Matrix& truth, const Matrix& learned, double threshold = 0.9);

// ---------------------------------------------------------------------------
// Report.

struct MetricsReport {
  std::string method;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::optional<double> validation_loss;
  std::optional<double> multi_information;
  std::optional<double> iwae_loss;
  std::optional<double> snr_encoder;
  std::optional<double> snr_generator;
  std::optional<Index> snr_excluded;
  std::optional<double> jaccard_mean;
  std::vector<Index> jaccard_histogram;
  std::optional<double> posterior_collapse_pct;
  std::optional<double> feature_collapse_pct;
  std::optional<double> nonzero_fraction;

  std::string to_json() const;
  static std::string csv_header();
  std::string to_csv_row() const;
};

/// FNV-1a of a text, as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

}  // namespace vsc
