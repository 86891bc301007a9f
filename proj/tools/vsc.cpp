// SPDX-License-Identifier: Apache-2.0
//
// vsc: train, evaluate and inspect variational sparse coding models.

#include "vsc/cli.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>

#include <fstream>
#include <iostream>
#include <iterator>

namespace {

int run_with_config(const std::string& path, const std::vector<std::string>& overrides,
                    int (*cmd)(vsc::RunConfig, std::ostream&)) {
  vsc::RunConfig config;
  try {
    std::string text;
    if (!path.empty()) {
      if (!std::filesystem::exists(path)) {
        std::cerr << "error: config not found: " << path << '\n';
        return vsc::kExitConfig;
      }
      std::ifstream in(path);
      text.assign(std::istreambuf_iterator<char>(in), {});
    }
    // section.key=value overrides are appended as their own sections
    for (const std::string& o : overrides) {
      const auto dot = o.find('.');
      const auto eq = o.find('=');
      if (dot == std::string::npos || eq == std::string::npos || dot > eq) {
        std::cerr << "error: override '" << o << "' is not section.key=value\n";
        return vsc::kExitConfig;
      }
      text += "\n[" + o.substr(0, dot) + "]\n" + o.substr(dot + 1) + "\n";
    }
    config = vsc::parse_config(text);
  } catch (const vsc::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return vsc::kExitConfig;
  }
  return cmd(std::move(config), std::cerr);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational sparse coding"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "Eigen worker threads")->check(CLI::PositiveNumber);

  std::string config_path;
  std::vector<std::string> overrides;
  auto* train = app.add_subcommand("train", "Train a variational model");
  train->add_option("config", config_path, "Config file")->required();
  train->add_option("--set", overrides, "Override section.key=value");

  auto* fista = app.add_subcommand("fista", "Learn a dictionary with FISTA inference");
  fista->add_option("config", config_path, "Config file")->required();
  fista->add_option("--set", overrides, "Override section.key=value");

  vsc::EvalRequest req;
  std::string ckpt, dataset, json_out, csv_out;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval->add_option("checkpoint", ckpt)->required();
  eval->add_option("dataset", dataset)->required();
  eval->add_option("--json", json_out, "Write the report here instead of stderr");
  eval->add_option("--csv", csv_out, "Append a CSV row here");
  eval->add_option("--lambda", req.options.lambda);
  eval->add_option("--iwae-k", req.options.iwae_k);
  eval->add_option("--snr-draws", req.options.snr_draws);
  eval->add_option("--jaccard-j", req.options.jaccard_j);
  eval->add_option("--seed", req.options.seed);

  std::string out;
  auto* export_dict = app.add_subcommand("export-dict", "Write dictionary atoms as a PGM image");
  export_dict->add_option("checkpoint", ckpt)->required();
  export_dict->add_option("out", out)->required();

  vsc::SyntheticSpec spec;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic sparse dataset");
  synth->add_option("out", out)->required();
  synth->add_option("--data-dim", spec.data_dim);
  synth->add_option("--latent-dim", spec.latent_dim);
  synth->add_option("--sparsity", spec.sparsity);
  synth->add_option("--coef-scale", spec.coef_scale);
  synth->add_option("--noise", spec.noise_sigma);
  synth->add_option("--count", spec.count);
  synth->add_option("--seed", spec.seed);

  std::string csv;
  auto* convert = app.add_subcommand("convert", "Convert numeric CSV patches to a dataset file");
  convert->add_option("csv", csv)->required();
  convert->add_option("out", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : vsc::kExitConfig;
  }
  Eigen::setNbThreads(threads);

  if (*train) return run_with_config(config_path, overrides, vsc::cmd_train);
  if (*fista) return run_with_config(config_path, overrides, vsc::cmd_fista);
  if (*eval) {
    req.checkpoint = ckpt;
    req.dataset = dataset;
    req.json_out = json_out;
    req.csv_out = csv_out;
    return vsc::cmd_eval(req, std::cerr);
  }
  if (*export_dict) return vsc::cmd_export_dict(ckpt, out, std::cerr);
  if (*synth) return vsc::cmd_synth(spec, out, std::cerr);
  if (*convert) return vsc::cmd_convert(csv, out, std::cerr);
  return vsc::kExitConfig;
}
