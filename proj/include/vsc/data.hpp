// SPDX-License-Identifier: Apache-2.0
//
// Patch datasets: natural-image patches, synthetic sparse data with ground
// truth, and the VSCD binary format.
//
// VSCD layout: the bytes "VSCD", one version byte, a JSON header terminated
// by '\n', then little-endian float64 payloads in header order. Every array
// is stored row-major with the shape given in the header; patches are
// [n, D], so the payload is byte-identical to the D x n column-major matrix.

#pragma once

#include "vsc/tape.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace vsc {

/// Malformed or unreadable dataset input.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Provenance { natural, synthetic };

struct GroundTruth {
  Matrix A;  // D x d, unit-norm columns
  Matrix Z;  // d x n
  double noise_sigma = 0.0;
};

struct PatchDataset {
  Matrix patches;  // D x n, one flattened patch per column
  Index patch_size = 0;  // 0 when D is not a square
  Provenance provenance = Provenance::natural;
  std::optional<GroundTruth> truth;

  Index dim() const { return patches.rows(); }
  Index size() const { return patches.cols(); }
};

struct SyntheticSpec {
  Index data_dim = 64;
  Index latent_dim = 64;
  Index sparsity = 6;  // nonzeros per code
  double coef_scale = 1.0;  // Laplace(0, b_gen) magnitudes
  double noise_sigma = 0.01;
  Index count = 8000;
  std::uint64_t seed = 0;

  void validate() const;
};

/// x = A* z* + N(0, sigma^2) with exactly `sparsity` nonzeros per code.
PatchDataset synthesize(const SyntheticSpec& spec);

/// Random patches (uniform top-left corners) flattened row-major.
PatchDataset extract_patches(const Matrix& image, Index patch_size, Index count, std::uint64_t seed);

/// Frequency-domain whitening with filter |f| exp(-(f/f0)^4), f0 = 0.4 Nyquist,
/// followed by a global rescale to unit variance across all images.
std::vector<Matrix> whiten(const std::vector<Matrix>& images);
Matrix whiten(const Matrix& image);

struct Split {
  Matrix train;
  Matrix val;
  std::vector<Index> val_index;
};

/// Holds out round(n * fraction) random columns.
Split split_validation(const Matrix& X, double fraction, std::uint64_t seed);
inline constexpr double kValidationFraction = 1.0 / 6.0;

void save_dataset(const std::filesystem::path& path, const PatchDataset& data);
PatchDataset load_dataset(const std::filesystem::path& path);

/// Numeric CSV, one patch per row, to a D x n matrix.
Matrix read_csv_patches(const std::filesystem::path& path);

/// Integer square root when `dim` is a perfect square, else 0.
Index square_side(Index dim);

}  // namespace vsc
