// SPDX-License-Identifier: Apache-2.0

#include "vsc/checkpoint.hpp"

#include "vsc/data.hpp"

#include <json.hpp>

#include <bit>
#include <fstream>

namespace vsc {

namespace {

using nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

ordered_json encoder_json(const EncoderConfig& c) {
  return {{"input_dim", c.input_dim},     {"hidden", c.hidden},           {"latent_dim", c.latent_dim},
          {"prior", to_string(c.prior)},  {"prior_scale", c.prior_scale}, {"lambda0", c.lambda0},
          {"alpha0", c.alpha0},           {"spike_prior", c.spike_prior}};
}

EncoderConfig encoder_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.input_dim = j.at("input_dim").get<Index>();
  c.hidden = j.at("hidden").get<std::vector<Index>>();
  c.latent_dim = j.at("latent_dim").get<Index>();
  c.prior = parse_prior_kind(j.at("prior").get<std::string>());
  c.prior_scale = j.at("prior_scale").get<double>();
  c.lambda0 = j.at("lambda0").get<double>();
  c.alpha0 = j.at("alpha0").get<double>();
  c.spike_prior = j.at("spike_prior").get<double>();
  return c;
}

void write(const std::filesystem::path& path, ordered_json header, const std::vector<std::pair<std::string, const Matrix*>>& tensors) {
  ordered_json list = ordered_json::array();
  for (const auto& [name, m] : tensors) list.push_back({{"name", name}, {"shape", {m->rows(), m->cols()}}});
  header["tensors"] = list;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << header.dump() << '\n';
  for (const auto& [name, m] : tensors) {
    out.write(reinterpret_cast<const char*>(m->data()), static_cast<std::streamsize>(m->size() * sizeof(double)));
  }
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const VariationalModel& model) {
  ordered_json h;
  h["format"] = "vsc-checkpoint";
  h["version"] = 1;
  h["kind"] = "variational";
  h["encoder"] = encoder_json(model.encoder.config);
  h["kappa"] = model.dict.kappa;
  h["warmup"] = {{"omega", model.warmup.omega},
                 {"tau", model.warmup.tau},
                 {"kl_ramp", model.warmup.kl_ramp},
                 {"iteration", model.warmup.iteration}};
  std::vector<std::pair<std::string, const Matrix*>> tensors;
  for (std::size_t i = 0; i < model.encoder.params.size(); ++i) {
    tensors.emplace_back(model.encoder.params.name(i), &model.encoder.params[i]);
  }
  tensors.emplace_back("dictionary", &model.dict.A);
  write(path, std::move(h), tensors);
}

void save_checkpoint(const std::filesystem::path& path, const Dictionary& dict) {
  ordered_json h;
  h["format"] = "vsc-checkpoint";
  h["version"] = 1;
  h["kind"] = "dictionary";
  h["kappa"] = dict.kappa;
  write(path, std::move(h), {{"dictionary", &dict.A}});
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("checkpoint '" + path.string() + "' is empty");
  Checkpoint ck;
  try {
    const auto h = nlohmann::json::parse(line);
    if (h.at("format").get<std::string>() != "vsc-checkpoint") throw DataError("not a checkpoint file");
    std::vector<std::pair<std::string, Matrix>> tensors;
    for (const auto& t : h.at("tensors")) {
      const auto shape = t.at("shape").get<std::vector<Index>>();
      if (shape.size() != 2 || shape[0] < 0 || shape[1] < 0) throw DataError("bad tensor shape in checkpoint");
      Matrix m(shape[0], shape[1]);
      in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
      if (in.gcount() != static_cast<std::streamsize>(m.size() * sizeof(double))) {
        throw DataError("checkpoint truncated in tensor '" + t.at("name").get<std::string>() + "'");
      }
      tensors.emplace_back(t.at("name").get<std::string>(), std::move(m));
    }
    if (in.peek() != std::char_traits<char>::eof()) throw DataError("trailing bytes after checkpoint payload");
    if (tensors.empty() || tensors.back().first != "dictionary") throw DataError("checkpoint lacks a dictionary");
    ck.dict = {std::move(tensors.back().second), h.at("kappa").get<double>()};
    tensors.pop_back();
    if (h.at("kind").get<std::string>() == "variational") {
      VariationalModel model;
      model.encoder.config = encoder_from_json(h.at("encoder"));
      for (auto& [name, m] : tensors) model.encoder.params.add(name, std::move(m));
      const Encoder fresh = init_encoder(model.encoder.config, 0);
      if (fresh.params.size() != model.encoder.params.size()) throw DataError("checkpoint encoder has the wrong layout");
      for (std::size_t i = 0; i < fresh.params.size(); ++i) {
        if (fresh.params.name(i) != model.encoder.params.name(i) ||
            fresh.params[i].rows() != model.encoder.params[i].rows() ||
            fresh.params[i].cols() != model.encoder.params[i].cols()) {
          throw DataError("checkpoint tensor '" + model.encoder.params.name(i) + "' does not match the encoder");
        }
      }
      const auto& w = h.at("warmup");
      model.warmup = {w.at("omega").get<double>(), w.at("tau").get<double>(), w.at("kl_ramp").get<double>(),
                      w.at("iteration").get<long>()};
      model.dict = ck.dict;
      ck.model = std::move(model);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint header: ") + e.what());
  }
  return ck;
}

}  // namespace vsc
