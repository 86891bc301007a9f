// SPDX-License-Identifier: Apache-2.0
//
// Command implementations behind the `vsc` executable. Each returns a process
// exit code: 0 success, 2 configuration error, 3 data error, 4 numerical abort.

#pragma once

#include "vsc/config.hpp"
#include "vsc/data.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace vsc {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitData = 3, kExitNumerical = 4 };

/// VSCD files, or numeric CSV when the extension is .csv.
PatchDataset load_patches(const std::filesystem::path& path);

/// Trains a variational model. Writes config.resolved.ini, epochs.jsonl,
/// model.ckpt and metrics.json/.csv under config.output_dir.
int cmd_train(RunConfig config, std::ostream& log);

/// Learns a dictionary with FISTA inference; same outputs with dict.ckpt.
int cmd_fista(RunConfig config, std::ostream& log);

struct EvalRequest {
  std::filesystem::path checkpoint;
  std::filesystem::path dataset;
  std::filesystem::path json_out;  // empty: print to the log stream
  std::filesystem::path csv_out;   // appended; header written when new
  EvalOptions options;
};

int cmd_eval(const EvalRequest& request, std::ostream& log);

/// Atoms sorted by descending norm, each min-max scaled to 0..255 (constant
/// atoms become mid-gray), tiled with 1-pixel black separators.
struct GrayImage {
  Index width = 0;
  Index height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};
GrayImage dictionary_image(const Matrix& A);
void write_pgm(const std::filesystem::path& path, const GrayImage& image);

int cmd_export_dict(const std::filesystem::path& checkpoint, const std::filesystem::path& out, std::ostream& log);

int cmd_synth(const SyntheticSpec& spec, const std::filesystem::path& out, std::ostream& log);

int cmd_convert(const std::filesystem::path& csv, const std::filesystem::path& out, std::ostream& log);

}  // namespace vsc
