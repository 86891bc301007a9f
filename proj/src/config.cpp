// SPDX-License-Identifier: Apache-2.0

#include "vsc/config.hpp"

#include "vsc/dist.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <string_view>
#include <vector>

namespace vsc {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& text, const std::string& key) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ConfigError("config: bad value '" + text + "' for " + key);
  return value;
}

bool parse_bool(const std::string& text, const std::string& key) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("config: expected true/false for " + key + ", got '" + text + "'");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
std::string fmt(bool v) { return v ? "true" : "false"; }
template <class T>
std::string fmt(T v) requires std::is_integral_v<T> { return std::to_string(v); }

struct Field {
  std::string section;
  std::string key;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class T>
Field number(std::string section, std::string key, T RunConfig::*outer) {
  return {std::move(section), std::move(key),
          [outer](RunConfig& c, const std::string& v, const std::string& k) { c.*outer = parse_number<T>(v, k); },
          [outer](const RunConfig& c) { return fmt(c.*outer); }};
}

template <class S, class T>
Field number(std::string section, std::string key, S RunConfig::*outer, T S::*inner) {
  return {std::move(section), std::move(key),
          [outer, inner](RunConfig& c, const std::string& v, const std::string& k) {
            (c.*outer).*inner = parse_number<T>(v, k);
          },
          [outer, inner](const RunConfig& c) { return fmt((c.*outer).*inner); }};
}

template <class S>
Field flag(std::string section, std::string key, S RunConfig::*outer, bool S::*inner) {
  return {std::move(section), std::move(key),
          [outer, inner](RunConfig& c, const std::string& v, const std::string& k) {
            (c.*outer).*inner = parse_bool(v, k);
          },
          [outer, inner](const RunConfig& c) { return fmt((c.*outer).*inner); }};
}

Field path(std::string key, std::filesystem::path RunConfig::*member) {
  return {"run", std::move(key), [member](RunConfig& c, const std::string& v, const std::string&) { c.*member = v; },
          [member](const RunConfig& c) { return (c.*member).string(); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(number("run", "seed", &RunConfig::seed));
    f.push_back(path("dataset", &RunConfig::dataset));
    f.push_back(path("output_dir", &RunConfig::output_dir));
    f.push_back(number("run", "validation_fraction", &RunConfig::validation_fraction));
    f.push_back(number("run", "checkpoint_every", &RunConfig::checkpoint_every));

    f.push_back({"encoder", "prior",
                 [](RunConfig& c, const std::string& v, const std::string&) {
                   try {
                     c.encoder.prior = parse_prior_kind(v);
                   } catch (const std::invalid_argument& e) {
                     throw ConfigError(std::string("config: ") + e.what());
                   }
                 },
                 [](const RunConfig& c) { return std::string(to_string(c.encoder.prior)); }});
    f.push_back(number("encoder", "latent_dim", &RunConfig::encoder, &EncoderConfig::latent_dim));
    f.push_back({"encoder", "hidden",
                 [](RunConfig& c, const std::string& v, const std::string& k) {
                   c.encoder.hidden.clear();
                   if (v == "auto") return;
                   std::stringstream ss(v);
                   std::string item;
                   while (std::getline(ss, item, ',')) c.encoder.hidden.push_back(parse_number<Index>(trim(item), k));
                 },
                 [](const RunConfig& c) {
                   if (c.encoder.hidden.empty()) return std::string("auto");
                   std::string out;
                   for (std::size_t i = 0; i < c.encoder.hidden.size(); ++i) {
                     if (i) out += ',';
                     out += std::to_string(c.encoder.hidden[i]);
                   }
                   return out;
                 }});
    f.push_back(number("encoder", "prior_scale", &RunConfig::encoder, &EncoderConfig::prior_scale));
    f.push_back({"encoder", "lambda0",
                 [](RunConfig& c, const std::string& v, const std::string& k) {
                   c.lambda0_auto = v == "auto";
                   if (!c.lambda0_auto) c.encoder.lambda0 = parse_number<double>(v, k);
                 },
                 [](const RunConfig& c) { return c.lambda0_auto ? std::string("auto") : fmt(c.encoder.lambda0); }});
    f.push_back(number("encoder", "nonzero_target", &RunConfig::nonzero_target));
    f.push_back(number("encoder", "alpha0", &RunConfig::encoder, &EncoderConfig::alpha0));
    f.push_back(number("encoder", "spike_prior", &RunConfig::encoder, &EncoderConfig::spike_prior));

    f.push_back(number("train", "epochs", &RunConfig::train, &TrainConfig::epochs));
    f.push_back(number("train", "batch_size", &RunConfig::train, &TrainConfig::batch_size));
    f.push_back(number("train", "samples", &RunConfig::train, &TrainConfig::samples));
    f.push_back({"train", "sampling",
                 [](RunConfig& c, const std::string& v, const std::string&) {
                   try {
                     c.train.sampling = parse_sampling(v);
                   } catch (const std::invalid_argument& e) {
                     throw ConfigError(std::string("config: ") + e.what());
                   }
                 },
                 [](const RunConfig& c) { return std::string(to_string(c.train.sampling)); }});
    f.push_back({"train", "estimator",
                 [](RunConfig& c, const std::string& v, const std::string&) {
                   try {
                     c.train.objective.estimator = parse_estimator(v);
                   } catch (const std::invalid_argument& e) {
                     throw ConfigError(std::string("config: ") + e.what());
                   }
                 },
                 [](const RunConfig& c) { return std::string(to_string(c.train.objective.estimator)); }});
    f.push_back(number("train", "dict_lr", &RunConfig::train, &TrainConfig::dict_lr));
    f.push_back(number("train", "dict_lr_decay", &RunConfig::train, &TrainConfig::dict_lr_decay));
    f.push_back(number("train", "enc_lr_max", &RunConfig::train, &TrainConfig::enc_lr_max));
    f.push_back(number("train", "momentum", &RunConfig::train, &TrainConfig::momentum));
    f.push_back(number("train", "kappa", &RunConfig::train, &TrainConfig::kappa));
    f.push_back({"train", "beta_kl",
                 [](RunConfig& c, const std::string& v, const std::string& k) {
                   c.train.objective.beta_kl = parse_number<double>(v, k);
                 },
                 [](const RunConfig& c) { return fmt(c.train.objective.beta_kl); }});
    f.push_back({"train", "beta_gamma",
                 [](RunConfig& c, const std::string& v, const std::string& k) {
                   c.train.objective.beta_gamma = parse_number<double>(v, k);
                 },
                 [](const RunConfig& c) { return fmt(c.train.objective.beta_gamma); }});
    f.push_back(number("train", "val_lambda", &RunConfig::train, &TrainConfig::val_lambda));
    f.push_back(flag("train", "check_finite", &RunConfig::train, &TrainConfig::check_finite));
    f.push_back(number("train", "enc_grad_clip", &RunConfig::train, &TrainConfig::enc_grad_clip));

    f.push_back(number("fista", "lambda", &RunConfig::fista, &FistaConfig::lambda));
    f.push_back(number("fista", "kappa", &RunConfig::fista, &FistaConfig::kappa));
    f.push_back(number("fista", "max_iters", &RunConfig::fista, &FistaConfig::max_iters));
    f.push_back(number("fista", "tol", &RunConfig::fista, &FistaConfig::tol));
    f.push_back(number("fista", "warmup_start", &RunConfig::fista, &FistaConfig::warmup_start));
    f.push_back(number("fista", "warmup_step", &RunConfig::fista, &FistaConfig::warmup_step));
    f.push_back(number("fista", "epochs", &RunConfig::fista_train, &FistaTrainConfig::epochs));
    f.push_back(number("fista", "batch_size", &RunConfig::fista_train, &FistaTrainConfig::batch_size));
    f.push_back(number("fista", "dict_lr", &RunConfig::fista_train, &FistaTrainConfig::dict_lr));
    f.push_back(number("fista", "dict_lr_decay", &RunConfig::fista_train, &FistaTrainConfig::dict_lr_decay));
    f.push_back(flag("fista", "warm_start", &RunConfig::fista_train, &FistaTrainConfig::warm_start));
    f.push_back(number("fista", "latent_dim", &RunConfig::fista_latent_dim));

    f.push_back(number("eval", "lambda", &RunConfig::eval, &EvalOptions::lambda));
    f.push_back(number("eval", "iwae_k", &RunConfig::eval, &EvalOptions::iwae_k));
    f.push_back(number("eval", "snr_draws", &RunConfig::eval, &EvalOptions::snr_draws));
    f.push_back(number("eval", "snr_samples", &RunConfig::eval, &EvalOptions::snr_samples));
    f.push_back(number("eval", "snr_batch", &RunConfig::eval, &EvalOptions::snr_batch));
    f.push_back(number("eval", "jaccard_j", &RunConfig::eval, &EvalOptions::jaccard_j));
    f.push_back(number("eval", "mi_k", &RunConfig::eval, &EvalOptions::mi_k));
    f.push_back(number("eval", "max_points", &RunConfig::eval, &EvalOptions::max_points));
    f.push_back(number("eval", "collapse_eps", &RunConfig::eval, &EvalOptions::collapse_eps));
    f.push_back(number("eval", "collapse_delta", &RunConfig::eval, &EvalOptions::collapse_delta));
    return f;
  }();
  return table;
}

const Field* find_field(const std::string& section, const std::string& key) {
  for (const auto& f : fields()) {
    if (f.section == section && f.key == key) return &f;
  }
  return nullptr;
}

}  // namespace

double calibrated_lambda0(const EncoderConfig& enc, double nonzero) {
  const double scale = enc.prior_base_scale();
  return laplace_base(enc.prior) ? laplace_threshold_for_nonzero(nonzero, scale)
                                 : gaussian_threshold_for_nonzero(nonzero, scale);
}

void RunConfig::resolve() {
  if (encoder.hidden.empty()) encoder.hidden = EncoderConfig::scaled_hidden(encoder.latent_dim);
  if (!(nonzero_target > 0 && nonzero_target <= 1)) throw ConfigError("config: nonzero_target must lie in (0, 1]");
  if (lambda0_auto) {
    encoder.lambda0 = calibrated_lambda0(encoder, nonzero_target);
    lambda0_auto = false;
  }
  if (!(validation_fraction >= 0 && validation_fraction < 1)) {
    throw ConfigError("config: validation_fraction must lie in [0, 1)");
  }
  if (checkpoint_every < 0) throw ConfigError("config: checkpoint_every must be >= 0");
  if (fista_latent_dim < 1) throw ConfigError("config: fista latent_dim must be >= 1");
  train.seed = seed;
  fista_train.seed = seed;
  eval.seed = seed;
  try {
    encoder.validate();
    train.validate();
    fista.validate();
    eval.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

RunConfig parse_config(const std::string& text) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  std::string section = "run";
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const std::string where = "config line " + std::to_string(lineno);
    if (body.front() == '[') {
      if (body.back() != ']') throw ConfigError(where + ": unterminated section header");
      section = trim(std::string_view(body).substr(1, body.size() - 2));
      bool known = false;
      for (const auto& f : fields()) known = known || f.section == section;
      if (!known) throw ConfigError(where + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    const Field* f = find_field(section, key);
    if (f == nullptr) throw ConfigError(where + ": unknown key '" + key + "' in [" + section + "]");
    f->set(config, value, section + "." + key);
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_string(const RunConfig& config) {
  std::ostringstream out;
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) out << '\n';
      section = f.section;
      out << '[' << section << "]\n";
    }
    out << f.key << " = " << f.get(config) << '\n';
  }
  return out.str();
}

void apply_environment(RunConfig& config) {
  const char* env = std::getenv("VSC_SEED");
  if (env == nullptr || *env == '\0') return;
  config.seed = parse_number<std::uint64_t>(trim(env), "VSC_SEED");
}

}  // namespace vsc
