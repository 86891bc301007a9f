// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: flat `key = value` lines grouped in [sections]. Keys
// before the first section belong to [run]. `#` and `;` start comments.
// Unknown sections and keys are rejected.

#pragma once

#include "vsc/encoder.hpp"
#include "vsc/evaluate.hpp"
#include "vsc/fista.hpp"
#include "vsc/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace vsc {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  // [run]
  std::uint64_t seed = 0;
  std::filesystem::path dataset;
  std::filesystem::path output_dir = "out";
  double validation_fraction = 1.0 / 6.0;
  int checkpoint_every = 0;  // epochs between checkpoints; 0 keeps only the final one

  // [encoder]. An empty `hidden` scales with latent_dim; lambda0_auto
  // calibrates lambda0 to nonzero_target.
  EncoderConfig encoder = [] {
    EncoderConfig e;
    e.hidden.clear();
    return e;
  }();
  bool lambda0_auto = true;
  double nonzero_target = 0.1;

  // [train]
  TrainConfig train;

  // [fista]
  FistaConfig fista;
  FistaTrainConfig fista_train;
  Index fista_latent_dim = 256;

  // [eval]
  EvalOptions eval;

  /// Copies the run seed into every component and validates.
  void resolve();
};

/// Threshold giving `nonzero` of the prior's base samples a nonzero value.
double calibrated_lambda0(const EncoderConfig& enc, double nonzero);

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Every key with its resolved value, parseable by parse_config.
std::string to_string(const RunConfig& config);

/// Applies VSC_SEED when set; throws ConfigError on a malformed value.
void apply_environment(RunConfig& config);

}  // namespace vsc
