// SPDX-License-Identifier: Apache-2.0
//
// Model checkpoints: one JSON header line (configs, warm-up state and the
// name and shape of every tensor), followed by the tensors as little-endian
// float64 in column-major order.

#pragma once

#include "vsc/trainer.hpp"

#include <filesystem>
#include <optional>

namespace vsc {

struct Checkpoint {
  std::optional<VariationalModel> model;  // absent for dictionary-only checkpoints
  Dictionary dict;
};

void save_checkpoint(const std::filesystem::path& path, const VariationalModel& model);
void save_checkpoint(const std::filesystem::path& path, const Dictionary& dict);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vsc
