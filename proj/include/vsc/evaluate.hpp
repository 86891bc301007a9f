// SPDX-License-Identifier: Apache-2.0
//
// Assembles a MetricsReport for a trained variational model or a dictionary
// learned with FISTA.

#pragma once

#include "vsc/fista.hpp"
#include "vsc/metrics.hpp"
#include "vsc/trainer.hpp"

#include <cstdint>
#include <string>

namespace vsc {

struct EvalOptions {
  double lambda = 20.0;  // sparse-objective weight of the validation loss
  int iwae_k = 200;      // 0 skips the IWAE bound
  int snr_draws = 0;     // S; 0 skips the SNR
  int snr_samples = 1;   // J of the estimator whose SNR is measured
  Index snr_batch = 100;
  int jaccard_j = 20;  // 0 skips Jaccard
  int mi_k = 3;        // 0 skips the multi-information
  Index max_points = 2000;  // cap on data used by MI, IWAE and Jaccard
  double collapse_eps = 1e-2;
  double collapse_delta = 5e-2;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Validation loss from eval-stream single samples, plus every enabled metric.
/// `sampling` and `objective` describe the training estimator for the SNR.
MetricsReport evaluate_model(const VariationalModel& model, const Matrix& X, const EvalOptions& opts,
                             Sampling sampling = Sampling::max, const ObjectiveConfig& objective = {});

/// FISTA codes at opts.lambda; reports the validation loss, multi-information
/// and nonzero fraction.
MetricsReport evaluate_dictionary(const Dictionary& dict, const Matrix& X, const EvalOptions& opts,
                                  const FistaConfig& fista = {});

}  // namespace vsc
