// SPDX-License-Identifier: Apache-2.0

#include "vsc/cli.hpp"

#include "vsc/checkpoint.hpp"
#include "vsc/evaluate.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>

namespace vsc {

namespace fs = std::filesystem;

namespace {

template <class Fn>
int guarded(std::ostream& log, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    log << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    log << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const ShapeError& e) {
    log << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    log << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericalError& e) {
    log << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    log << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

void append_csv(const fs::path& path, const MetricsReport& report) {
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  if (fresh) out << MetricsReport::csv_header() << '\n';
  out << report.to_csv_row() << '\n';
}

struct Prepared {
  RunConfig config;
  Split split;
};

Prepared prepare(RunConfig config) {
  apply_environment(config);
  config.resolve();
  if (config.dataset.empty()) throw ConfigError("config: run.dataset is required");
  if (!fs::exists(config.dataset)) throw DataError("dataset not found: " + config.dataset.string());
  const PatchDataset data = load_patches(config.dataset);
  if (data.size() == 0) throw DataError("dataset '" + config.dataset.string() + "' is empty");
  config.encoder.input_dim = data.dim();
  Split split = split_validation(data.patches, config.validation_fraction, config.seed);
  fs::create_directories(config.output_dir);
  write_text(config.output_dir / "config.resolved.ini", to_string(config));
  return {std::move(config), std::move(split)};
}

// Identifies the experiment; the output location is not part of it.
std::string config_hash(RunConfig c) {
  c.output_dir.clear();
  return fnv1a_hex(to_string(c));
}

void write_report(const fs::path& dir, const MetricsReport& report) {
  write_text(dir / "metrics.json", report.to_json() + "\n");
  const fs::path csv = dir / "metrics.csv";
  if (fs::exists(csv)) fs::remove(csv);
  append_csv(csv, report);
}

}  // namespace

PatchDataset load_patches(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("dataset not found: " + path.string());
  if (path.extension() == ".csv") {
    PatchDataset ds;
    ds.patches = read_csv_patches(path);
    ds.patch_size = square_side(ds.patches.rows());
    return ds;
  }
  return load_dataset(path);
}

int cmd_train(RunConfig config, std::ostream& log) {
  return guarded(log, [&] {
    Prepared p = prepare(std::move(config));
    const RunConfig& c = p.config;
    const Matrix& val = p.split.val.cols() > 0 ? p.split.val : p.split.train;
    std::ofstream epochs(c.output_dir / "epochs.jsonl");
    auto on_epoch = [&](const EpochLog& e, const VariationalModel& model) {
      epochs << to_json(e) << '\n';
      if (c.checkpoint_every > 0 && (e.epoch + 1) % c.checkpoint_every == 0) {
        save_checkpoint(c.output_dir / ("model_epoch" + std::to_string(e.epoch + 1) + ".ckpt"), model);
      }
    };
    TrainResult result;
    try {
      result = train(p.split.train, val, c.train, c.encoder, on_epoch);
    } catch (const TrainingAborted& e) {
      log << "training aborted at iteration " << e.iteration() << " (" << e.term() << ")\n";
      return static_cast<int>(kExitNumerical);
    }
    save_checkpoint(c.output_dir / "model.ckpt", result.model);
    MetricsReport report = evaluate_model(result.model, val, c.eval, c.train.sampling, c.train.objective);
    report.method = std::string(to_string(c.encoder.prior)) + "_J" + std::to_string(c.train.samples) + "_" +
                    std::string(to_string(c.train.sampling));
    report.config_hash = config_hash(c);
    write_report(c.output_dir, report);
    log << report.to_json() << '\n';
    return static_cast<int>(kExitOk);
  });
}

int cmd_fista(RunConfig config, std::ostream& log) {
  return guarded(log, [&] {
    Prepared p = prepare(std::move(config));
    const RunConfig& c = p.config;
    const Matrix& val = p.split.val.cols() > 0 ? p.split.val : p.split.train;
    std::ofstream epochs(c.output_dir / "epochs.jsonl");
    auto on_epoch = [&](const FistaEpochLog& e) {
      nlohmann::ordered_json j;
      j["epoch"] = e.epoch;
      j["iteration"] = e.iteration;
      j["train_objective"] = e.train_objective;
      j["lambda_effective"] = e.lambda_effective;
      j["dict_lr"] = e.dict_lr;
      j["nonzero_fraction"] = e.nonzero_fraction;
      j["dict_norm"] = e.dict_norm;
      epochs << j.dump() << '\n';
    };
    const FistaRun run = fista_dictionary_learn(p.split.train, c.fista, c.fista_train, c.fista_latent_dim, nullptr,
                                                on_epoch);
    save_checkpoint(c.output_dir / "dict.ckpt", run.dict);
    MetricsReport report = evaluate_dictionary(run.dict, val, c.eval, c.fista);
    report.config_hash = config_hash(c);
    write_report(c.output_dir, report);
    log << report.to_json() << '\n';
    return static_cast<int>(kExitOk);
  });
}

int cmd_eval(const EvalRequest& request, std::ostream& log) {
  return guarded(log, [&] {
    request.options.validate();
    const Checkpoint ck = load_checkpoint(request.checkpoint);
    const PatchDataset data = load_patches(request.dataset);
    MetricsReport report = ck.model ? evaluate_model(*ck.model, data.patches, request.options)
                                    : evaluate_dictionary(ck.dict, data.patches, request.options);
    report.config_hash = fnv1a_hex(request.checkpoint.filename().string());
    if (request.json_out.empty()) {
      log << report.to_json() << '\n';
    } else {
      if (request.json_out.has_parent_path()) fs::create_directories(request.json_out.parent_path());
      write_text(request.json_out, report.to_json() + "\n");
    }
    if (!request.csv_out.empty()) append_csv(request.csv_out, report);
    return static_cast<int>(kExitOk);
  });
}

GrayImage dictionary_image(const Matrix& A) {
  const Index side = square_side(A.rows());
  if (side == 0) throw ShapeError("export: atom dimension " + std::to_string(A.rows()) + " is not a square");
  const Index d = A.cols();
  GrayImage img;
  if (d == 0) return img;
  std::vector<Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), Index{0});
  const Eigen::RowVectorXd norms = A.colwise().norm();
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return norms(a) > norms(b); });

  const auto grid_cols = static_cast<Index>(std::ceil(std::sqrt(static_cast<double>(d))));
  const Index grid_rows = (d + grid_cols - 1) / grid_cols;
  img.width = grid_cols * side + (grid_cols - 1);
  img.height = grid_rows * side + (grid_rows - 1);
  img.pixels.assign(static_cast<std::size_t>(img.width * img.height), 0);
  for (Index t = 0; t < d; ++t) {
    const auto atom = A.col(order[static_cast<std::size_t>(t)]);
    const double lo = atom.minCoeff(), hi = atom.maxCoeff();
    const Index r0 = (t / grid_cols) * (side + 1), c0 = (t % grid_cols) * (side + 1);
    for (Index r = 0; r < side; ++r) {
      for (Index c = 0; c < side; ++c) {
        const double v = atom(r * side + c);
        const double level = hi > lo ? std::round(255.0 * (v - lo) / (hi - lo)) : 128.0;
        img.pixels[static_cast<std::size_t>((r0 + r) * img.width + c0 + c)] = static_cast<std::uint8_t>(level);
      }
    }
  }
  return img;
}

void write_pgm(const fs::path& path, const GrayImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
}

int cmd_export_dict(const fs::path& checkpoint, const fs::path& out, std::ostream& log) {
  return guarded(log, [&] {
    const Checkpoint ck = load_checkpoint(checkpoint);
    const GrayImage img = dictionary_image(ck.dict.A);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_pgm(out, img);
    log << "wrote " << out.string() << " (" << img.width << "x" << img.height << ")\n";
    return static_cast<int>(kExitOk);
  });
}

int cmd_synth(const SyntheticSpec& spec, const fs::path& out, std::ostream& log) {
  return guarded(log, [&] {
    const PatchDataset ds = synthesize(spec);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    save_dataset(out, ds);
    log << "wrote " << ds.size() << " patches of dimension " << ds.dim() << " to " << out.string() << '\n';
    return static_cast<int>(kExitOk);
  });
}

int cmd_convert(const fs::path& csv, const fs::path& out, std::ostream& log) {
  return guarded(log, [&] {
    if (!fs::exists(csv)) throw DataError("input not found: " + csv.string());
    PatchDataset ds;
    ds.patches = read_csv_patches(csv);
    ds.patch_size = square_side(ds.patches.rows());
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    save_dataset(out, ds);
    log << "wrote " << ds.size() << " patches to " << out.string() << '\n';
    return static_cast<int>(kExitOk);
  });
}

}  // namespace vsc
