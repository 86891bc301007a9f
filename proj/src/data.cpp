// SPDX-License-Identifier: Apache-2.0

#include "vsc/data.hpp"

#include "vsc/dist.hpp"
#include "vsc/generator.hpp"
#include "vsc/rng.hpp"

#include <json.hpp>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace vsc {

namespace {

constexpr std::uint64_t kSynthDictStream = 0x5D1C;
constexpr std::uint64_t kSynthCodeStream = 0x5C0D;
constexpr std::uint64_t kSynthNoiseStream = 0x5E05;
constexpr std::uint64_t kPatchStream = 0x9A7C;
constexpr std::uint64_t kSplitStream = 0x5B17;
constexpr char kMagic[4] = {'V', 'S', 'C', 'D'};
constexpr std::uint8_t kVersion = 1;

double byteswap(double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  bits = __builtin_bswap64(bits);
  std::memcpy(&v, &bits, sizeof bits);
  return v;
}

void write_payload(std::ostream& out, const Matrix& m) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  } else {
    for (Index i = 0; i < m.size(); ++i) {
      const double v = byteswap(m(i));
      out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  }
}

void read_payload(std::istream& in, Matrix& m, const std::string& name) {
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(m.size() * sizeof(double))) {
    throw DataError("dataset truncated while reading '" + name + "'");
  }
  if constexpr (std::endian::native != std::endian::little) {
    for (Index i = 0; i < m.size(); ++i) m(i) = byteswap(m(i));
  }
}

std::vector<std::complex<double>> fft2(const Matrix& image) {
  const Index h = image.rows(), w = image.cols();
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(h * w));
  std::vector<double> row(static_cast<std::size_t>(w));
  std::vector<std::complex<double>> tmp;
  for (Index r = 0; r < h; ++r) {
    for (Index c = 0; c < w; ++c) row[static_cast<std::size_t>(c)] = image(r, c);
    fft.fwd(tmp, row);
    for (Index c = 0; c < w; ++c) buf[static_cast<std::size_t>(r * w + c)] = tmp[static_cast<std::size_t>(c)];
  }
  std::vector<std::complex<double>> col(static_cast<std::size_t>(h));
  for (Index c = 0; c < w; ++c) {
    for (Index r = 0; r < h; ++r) col[static_cast<std::size_t>(r)] = buf[static_cast<std::size_t>(r * w + c)];
    fft.fwd(tmp, col);
    for (Index r = 0; r < h; ++r) buf[static_cast<std::size_t>(r * w + c)] = tmp[static_cast<std::size_t>(r)];
  }
  return buf;
}

Matrix ifft2_real(std::vector<std::complex<double>> buf, Index h, Index w) {
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> line, tmp;
  line.resize(static_cast<std::size_t>(h));
  for (Index c = 0; c < w; ++c) {
    for (Index r = 0; r < h; ++r) line[static_cast<std::size_t>(r)] = buf[static_cast<std::size_t>(r * w + c)];
    fft.inv(tmp, line);
    for (Index r = 0; r < h; ++r) buf[static_cast<std::size_t>(r * w + c)] = tmp[static_cast<std::size_t>(r)];
  }
  Matrix out(h, w);
  line.resize(static_cast<std::size_t>(w));
  for (Index r = 0; r < h; ++r) {
    for (Index c = 0; c < w; ++c) line[static_cast<std::size_t>(c)] = buf[static_cast<std::size_t>(r * w + c)];
    fft.inv(tmp, line);
    for (Index c = 0; c < w; ++c) out(r, c) = tmp[static_cast<std::size_t>(c)].real();
  }
  return out;
}

// Signed frequency in cycles/pixel of FFT bin k out of n.
double freq(Index k, Index n) {
  const Index s = k <= n / 2 ? k : k - n;
  return static_cast<double>(s) / static_cast<double>(n);
}

}  // namespace

Index square_side(Index dim) {
  if (dim < 1) return 0;
  const auto s = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(dim))));
  return s * s == dim ? s : 0;
}

void SyntheticSpec::validate() const {
  if (data_dim < 1 || latent_dim < 1) throw std::invalid_argument("synth: dims must be >= 1");
  if (sparsity < 1 || sparsity > latent_dim) throw std::invalid_argument("synth: need 1 <= sparsity <= latent_dim");
  if (!(coef_scale > 0)) throw std::invalid_argument("synth: coef_scale must be positive");
  if (noise_sigma < 0) throw std::invalid_argument("synth: noise_sigma must be non-negative");
  if (count < 0) throw std::invalid_argument("synth: count must be non-negative");
}

PatchDataset synthesize(const SyntheticSpec& spec) {
  spec.validate();
  GroundTruth truth;
  truth.A = init_dictionary(spec.data_dim, spec.latent_dim, spec.seed ^ kSynthDictStream).A;
  truth.noise_sigma = spec.noise_sigma;
  truth.Z = Matrix::Zero(spec.latent_dim, spec.count);
  Rng codes = make_stream(spec.seed, kSynthCodeStream);
  std::uniform_real_distribution<double> unif(-0.5, 0.5);
  std::vector<Index> slots(static_cast<std::size_t>(spec.latent_dim));
  for (Index k = 0; k < spec.count; ++k) {
    std::iota(slots.begin(), slots.end(), Index{0});
    for (Index j = 0; j < spec.sparsity; ++j) {
      std::uniform_int_distribution<Index> pick(j, spec.latent_dim - 1);
      std::swap(slots[static_cast<std::size_t>(j)], slots[static_cast<std::size_t>(pick(codes))]);
      double v = 0.0;
      while (v == 0.0) v = laplace_from_uniform(unif(codes), 0.0, spec.coef_scale);
      truth.Z(slots[static_cast<std::size_t>(j)], k) = v;
    }
  }
  Rng noise = make_stream(spec.seed, kSynthNoiseStream);
  PatchDataset ds;
  ds.patches = truth.A * truth.Z + spec.noise_sigma * standard_normal(spec.data_dim, spec.count, noise);
  ds.patch_size = square_side(spec.data_dim);
  ds.provenance = Provenance::synthetic;
  ds.truth = std::move(truth);
  return ds;
}

PatchDataset extract_patches(const Matrix& image, Index patch_size, Index count, std::uint64_t seed) {
  if (patch_size < 1) throw std::invalid_argument("extract_patches: patch_size must be >= 1");
  if (image.rows() < patch_size || image.cols() < patch_size) {
    throw std::invalid_argument("extract_patches: image smaller than the patch");
  }
  if (count < 0) throw std::invalid_argument("extract_patches: count must be non-negative");
  Rng rng = make_stream(seed, kPatchStream);
  std::uniform_int_distribution<Index> row(0, image.rows() - patch_size);
  std::uniform_int_distribution<Index> col(0, image.cols() - patch_size);
  PatchDataset ds;
  ds.patch_size = patch_size;
  ds.patches.resize(patch_size * patch_size, count);
  for (Index k = 0; k < count; ++k) {
    const Index r0 = row(rng), c0 = col(rng);
    for (Index r = 0; r < patch_size; ++r) {
      for (Index c = 0; c < patch_size; ++c) ds.patches(r * patch_size + c, k) = image(r0 + r, c0 + c);
    }
  }
  return ds;
}

std::vector<Matrix> whiten(const std::vector<Matrix>& images) {
  std::vector<Matrix> out;
  double sum = 0.0, sum_sq = 0.0, count = 0.0;
  for (const auto& img : images) {
    if (img.rows() != img.cols()) throw std::invalid_argument("whiten: images must be square");
    const Index n = img.rows();
    auto spec = fft2(img);
    const double f0 = 0.4 * 0.5;
    for (Index r = 0; r < n; ++r) {
      for (Index c = 0; c < n; ++c) {
        const double fy = freq(r, n), fx = freq(c, n);
        const double f = std::sqrt(fx * fx + fy * fy);
        spec[static_cast<std::size_t>(r * n + c)] *= f * std::exp(-std::pow(f / f0, 4.0));
      }
    }
    out.push_back(ifft2_real(std::move(spec), n, n));
    sum += out.back().sum();
    sum_sq += out.back().squaredNorm();
    count += static_cast<double>(out.back().size());
  }
  if (count == 0) return out;
  const double mean = sum / count;
  const double var = sum_sq / count - mean * mean;
  for (auto& img : out) {
    img.array() -= mean;
    if (var > 0) img /= std::sqrt(var);
  }
  return out;
}

Matrix whiten(const Matrix& image) { return whiten(std::vector<Matrix>{image}).front(); }

Split split_validation(const Matrix& X, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0 && fraction < 1)) throw std::invalid_argument("split_validation: fraction must lie in [0, 1)");
  const Index n = X.cols();
  const auto n_val = static_cast<Index>(std::llround(static_cast<double>(n) * fraction));
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng rng = make_stream(seed, kSplitStream);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Index> val(perm.begin(), perm.begin() + n_val);
  std::vector<Index> tr(perm.begin() + n_val, perm.end());
  std::sort(val.begin(), val.end());
  std::sort(tr.begin(), tr.end());
  Split s;
  s.train = X(Eigen::all, tr);
  s.val = X(Eigen::all, val);
  s.val_index = std::move(val);
  return s;
}

void save_dataset(const std::filesystem::path& path, const PatchDataset& data) {
  nlohmann::ordered_json header;
  header["dtype"] = "f64le";
  header["provenance"] = data.provenance == Provenance::synthetic ? "synthetic" : "natural";
  header["patch_size"] = data.patch_size;
  nlohmann::ordered_json arrays = nlohmann::ordered_json::array();
  arrays.push_back({{"name", "patches"}, {"shape", {data.size(), data.dim()}}});
  if (data.truth) {
    header["noise_sigma"] = data.truth->noise_sigma;
    arrays.push_back({{"name", "truth_A"}, {"shape", {data.truth->A.cols(), data.truth->A.rows()}}});
    arrays.push_back({{"name", "truth_Z"}, {"shape", {data.truth->Z.cols(), data.truth->Z.rows()}}});
  }
  header["arrays"] = arrays;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out.write(kMagic, 4);
  out.put(static_cast<char>(kVersion));
  out << header.dump() << '\n';
  write_payload(out, data.patches);
  if (data.truth) {
    write_payload(out, data.truth->A);
    write_payload(out, data.truth->Z);
  }
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

PatchDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset '" + path.string() + "'");
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError("'" + path.string() + "' is not a VSCD file (bad magic)");
  }
  const int version = in.get();
  if (version != kVersion) throw DataError("unsupported VSCD version " + std::to_string(version));
  std::string line;
  if (!std::getline(in, line)) throw DataError("dataset truncated in header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed VSCD header: ") + e.what());
  }

  const auto payload_start = in.tellg();
  in.seekg(0, std::ios::end);
  const auto remaining = static_cast<std::uintmax_t>(in.tellg() - payload_start);
  in.seekg(payload_start);

  PatchDataset ds;
  try {
    ds.patch_size = header.at("patch_size").get<Index>();
    ds.provenance = header.at("provenance").get<std::string>() == "synthetic" ? Provenance::synthetic
                                                                              : Provenance::natural;
    if (header.at("dtype").get<std::string>() != "f64le") throw DataError("unsupported dtype");
    std::uintmax_t expected = 0;
    std::vector<std::pair<std::string, std::array<Index, 2>>> arrays;
    for (const auto& a : header.at("arrays")) {
      const auto shape = a.at("shape").get<std::vector<std::int64_t>>();
      if (shape.size() != 2 || shape[0] < 0 || shape[1] < 0) throw DataError("bad array shape in header");
      const auto r = static_cast<std::uintmax_t>(shape[0]), c = static_cast<std::uintmax_t>(shape[1]);
      if (c != 0 && r > (std::uintmax_t{1} << 40) / c) throw DataError("array shape overflows");
      expected += r * c * sizeof(double);
      arrays.push_back({a.at("name").get<std::string>(), {static_cast<Index>(shape[0]), static_cast<Index>(shape[1])}});
    }
    if (expected != remaining) {
      throw DataError("header declares " + std::to_string(expected) + " payload bytes but file has " +
                      std::to_string(remaining));
    }
    for (const auto& [name, shape] : arrays) {
      Matrix m(shape[1], shape[0]);
      read_payload(in, m, name);
      if (name == "patches") {
        ds.patches = std::move(m);
      } else {
        if (!ds.truth) ds.truth = GroundTruth{};
        if (name == "truth_A") ds.truth->A = std::move(m);
        else if (name == "truth_Z") ds.truth->Z = std::move(m);
        else throw DataError("unknown array '" + name + "'");
      }
    }
    if (ds.truth) ds.truth->noise_sigma = header.value("noise_sigma", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed VSCD header: ") + e.what());
  }
  return ds;
}

Matrix read_csv_patches(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV '" + path.string() + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw DataError("non-numeric CSV cell at line " + std::to_string(lineno));
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw DataError("CSV line " + std::to_string(lineno) + " has " + std::to_string(row.size()) + " columns, expected " +
                      std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("CSV '" + path.string() + "' holds no rows");
  Matrix X(static_cast<Index>(rows.front().size()), static_cast<Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    for (std::size_t i = 0; i < rows[k].size(); ++i) X(static_cast<Index>(i), static_cast<Index>(k)) = rows[k][i];
  }
  return X;
}

}  // namespace vsc
