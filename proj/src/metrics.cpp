// SPDX-License-Identifier: Apache-2.0

#include "vsc/metrics.hpp"

#include "vsc/dist.hpp"
#include "vsc/special.hpp"
#include "vsc/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace vsc {

namespace {

constexpr std::uint64_t kDequantStream = 0xDE0;
constexpr std::uint64_t kSnrStream = 0x5A1;

// Per-coordinate running mean and population variance.
class Welford {
 public:
  void add(const Vector& v) {
    if (count_ == 0) {
      mean_ = Vector::Zero(v.size());
      m2_ = Vector::Zero(v.size());
    } else if (v.size() != mean_.size()) {
      throw ShapeError("grad_snr: gradient size changed between draws");
    }
    ++count_;
    const Vector delta = v - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta.cwiseProduct(v - mean_);
  }

  SnrResult result() const {
    SnrResult out;
    double sum = 0.0;
    for (Index i = 0; i < mean_.size(); ++i) {
      const double sd = std::sqrt(std::max(m2_(i), 0.0) / static_cast<double>(count_));
      if (sd < 1e-12) {
        ++out.excluded;
        continue;
      }
      sum += std::abs(mean_(i)) / sd;
      ++out.used;
    }
    out.snr = out.used > 0 ? sum / static_cast<double>(out.used) : std::numeric_limits<double>::quiet_NaN();
    return out;
  }

 private:
  long count_ = 0;
  Vector mean_;
  Vector m2_;
};

Vector flatten(const std::vector<Matrix>& parts) {
  Index total = 0;
  for (const auto& p : parts) total += p.size();
  Vector out(total);
  Index at = 0;
  for (const auto& p : parts) {
    out.segment(at, p.size()) = Eigen::Map<const Vector>(p.data(), p.size());
    at += p.size();
  }
  return out;
}

// k-th neighbour distances in one dimension from sorted values.
std::vector<double> knn_1d(const Eigen::RowVectorXd& values, int k) {
  const Index n = values.size();
  std::vector<std::pair<double, Index>> sorted(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) sorted[static_cast<std::size_t>(i)] = {values(i), i};
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    // Merge outward from position i, taking k steps.
    Index lo = i - 1, hi = i + 1;
    double r = 0.0;
    const double v = sorted[static_cast<std::size_t>(i)].first;
    for (int step = 0; step < k; ++step) {
      const double dl = lo >= 0 ? v - sorted[static_cast<std::size_t>(lo)].first : std::numeric_limits<double>::infinity();
      const double dh = hi < n ? sorted[static_cast<std::size_t>(hi)].first - v : std::numeric_limits<double>::infinity();
      if (dl <= dh) {
        r = dl;
        --lo;
      } else {
        r = dh;
        ++hi;
      }
    }
    out[static_cast<std::size_t>(sorted[static_cast<std::size_t>(i)].second)] = r;
  }
  return out;
}

double log_unit_ball_volume(Index d) {
  const double h = 0.5 * static_cast<double>(d);
  return h * std::log(M_PI) - std::lgamma(h + 1.0);
}

}  // namespace

double validation_loss(const Matrix& A, const Matrix& Z, const Matrix& X, double lambda, double kappa) {
  return dictionary_objective(A, X, Z, lambda, kappa);
}

std::vector<double> knn_distances(const Matrix& points, int k) {
  const Index n = points.cols();
  if (k < 1) throw std::invalid_argument("knn_distances: k must be >= 1");
  if (n <= k) throw std::invalid_argument("knn_distances: need more than k points");
  if (points.rows() == 1) return knn_1d(points.row(0), k);

  const Vector sq = points.colwise().squaredNorm().transpose();
  std::vector<double> out(static_cast<std::size_t>(n));
  std::vector<double> row(static_cast<std::size_t>(n - 1));
  constexpr Index kBlock = 256;
  for (Index start = 0; start < n; start += kBlock) {
    const Index m = std::min(kBlock, n - start);
    const Matrix gram = points.middleCols(start, m).transpose() * points;
    for (Index a = 0; a < m; ++a) {
      const Index i = start + a;
      std::size_t at = 0;
      for (Index j = 0; j < n; ++j) {
        if (j == i) continue;
        row[at++] = std::max(sq(i) + sq(j) - 2.0 * gram(a, j), 0.0);
      }
      std::nth_element(row.begin(), row.begin() + (k - 1), row.end());
      out[static_cast<std::size_t>(i)] = std::sqrt(row[static_cast<std::size_t>(k - 1)]);
    }
  }
  return out;
}

double kl_entropy(const Matrix& points, int k) {
  const Index n = points.cols();
  const Index d = points.rows();
  if (d == 0) throw std::invalid_argument("kl_entropy: zero-dimensional points");
  const std::vector<double> r = knn_distances(points, k);
  double sum_log = 0.0;
  for (double ri : r) {
    if (!(ri > 0.0)) throw NumericalError("kl_entropy: duplicate points give a zero neighbour distance");
    sum_log += std::log(ri);
  }
  const double N = static_cast<double>(n);
  return special::digamma(N) - special::digamma(static_cast<double>(k)) + log_unit_ball_volume(d) +
         static_cast<double>(d) / N * sum_log;
}

MultiInformation multi_information(const Matrix& Z, int k, std::uint64_t seed) {
  MultiInformation out;
  std::vector<Index> keep;
  for (Index i = 0; i < Z.rows(); ++i) {
    const double range = Z.row(i).maxCoeff() - Z.row(i).minCoeff();
    if (range > 0.0) keep.push_back(i);
    else out.excluded.push_back(i);
  }
  if (keep.empty()) return out;

  Rng rng = make_stream(seed, kDequantStream);
  std::uniform_real_distribution<double> unit(-0.5, 0.5);
  Matrix kept(static_cast<Index>(keep.size()), Z.cols());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    const auto row = Z.row(keep[r]);
    const double width = 1e-4 * (row.maxCoeff() - row.minCoeff());
    for (Index c = 0; c < Z.cols(); ++c) {
      const double v = row(c);
      kept(static_cast<Index>(r), c) = v == 0.0 ? width * unit(rng) : v;
    }
  }
  double marginal = 0.0;
  for (Index r = 0; r < kept.rows(); ++r) marginal += kl_entropy(kept.row(r), k);
  out.value = marginal - kl_entropy(kept, k);
  return out;
}

SnrResult grad_snr(const std::function<Vector(int)>& draw, int S) {
  if (S < 2) throw std::invalid_argument("grad_snr: need at least two draws");
  Welford acc;
  for (int s = 0; s < S; ++s) acc.add(draw(s));
  return acc.result();
}

ModelSnr model_grad_snr(const VariationalModel& model, const Matrix& x, const SnrOptions& opts) {
  if (opts.draws < 2) throw std::invalid_argument("model_grad_snr: need at least two draws");
  if (opts.samples < 1) throw std::invalid_argument("model_grad_snr: samples must be >= 1");
  Rng rng = make_stream(opts.seed, kSnrStream);
  Welford enc, gen;
  for (int s = 0; s < opts.draws; ++s) {
    LossGradients g = loss_gradients(model, x, opts.samples, opts.sampling, opts.objective, rng);
    enc.add(flatten(g.encoder));
    gen.add(Eigen::Map<const Vector>(g.dict.data(), g.dict.size()));
  }
  return {enc.result(), gen.result()};
}

double jaccard_index(const std::vector<Index>& a, const std::vector<Index>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::vector<Index> sa = a, sb = b;
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  sa.erase(std::unique(sa.begin(), sa.end()), sa.end());
  sb.erase(std::unique(sb.begin(), sb.end()), sb.end());
  std::vector<Index> common;
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(common));
  const double uni = static_cast<double>(sa.size() + sb.size() - common.size());
  return static_cast<double>(common.size()) / uni;
}

JaccardResult jaccard_consistency(const EncoderConfig& config, const PosteriorValues& q, const Matrix& A, int J,
                                  Rng& rng, double norm_threshold) {
  if (J < 2) throw std::invalid_argument("jaccard_consistency: need J >= 2");
  if (A.cols() != q.latent_dim()) throw ShapeError("jaccard_consistency: dictionary and codes disagree");
  const Index n = q.cols();
  const Eigen::RowVectorXd norms = A.colwise().squaredNorm();
  std::vector<Matrix> draws;
  draws.reserve(static_cast<std::size_t>(J));
  for (int j = 0; j < J; ++j) draws.push_back(sample_codes(config, q, rng));

  JaccardResult out;
  out.per_datum.resize(n);
  std::vector<std::vector<Index>> supports(static_cast<std::size_t>(J));
  for (Index c = 0; c < n; ++c) {
    for (int j = 0; j < J; ++j) {
      auto& s = supports[static_cast<std::size_t>(j)];
      s.clear();
      for (Index i = 0; i < q.latent_dim(); ++i) {
        if (norms(i) > norm_threshold && draws[static_cast<std::size_t>(j)](i, c) != 0.0) s.push_back(i);
      }
    }
    double sum = 0.0;
    for (int a = 0; a < J; ++a) {
      for (int b = a + 1; b < J; ++b) {
        sum += jaccard_index(supports[static_cast<std::size_t>(a)], supports[static_cast<std::size_t>(b)]);
      }
    }
    out.per_datum(c) = sum / (0.5 * J * (J - 1));
  }
  out.mean = n > 0 ? out.per_datum.mean() : 0.0;
  return out;
}

std::vector<Index> histogram01(const Eigen::RowVectorXd& values, int bins) {
  if (bins < 1) throw std::invalid_argument("histogram01: bins must be >= 1");
  std::vector<Index> counts(static_cast<std::size_t>(bins), 0);
  for (Index i = 0; i < values.size(); ++i) {
    const double v = values(i);
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("histogram01: value outside [0, 1]");
    const int b = std::min(static_cast<int>(v * bins), bins - 1);
    ++counts[static_cast<std::size_t>(b)];
  }
  return counts;
}

Matrix base_kl(const EncoderConfig& config, const PosteriorValues& q) {
  const Index d = q.latent_dim(), n = q.cols();
  Matrix out(d, n);
  const double s0 = config.prior_base_scale();
  for (Index c = 0; c < n; ++c) {
    for (Index i = 0; i < d; ++i) {
      const double mu = q.shift(i, c);
      const double ls = q.log_scale(i, c);
      if (laplace_base(config.prior)) {
        out(i, c) = kl_laplacian(mu, std::exp(ls), s0);
      } else if (config.prior == PriorKind::spike_slab) {
        const double g = 1.0 / (1.0 + std::exp(-q.spike_logit(i, c)));
        out(i, c) = g * kl_gaussian(mu, std::exp(0.5 * ls), s0) + kl_bernoulli(g, config.spike_prior);
      } else {
        out(i, c) = kl_gaussian(mu, std::exp(0.5 * ls), s0);
      }
    }
  }
  return out;
}

CollapseMetrics collapse_metrics(const EncoderConfig& config, const PosteriorValues& q, double eps, double delta) {
  const Index d = q.latent_dim(), n = q.cols();
  CollapseMetrics out;
  if (d == 0 || n == 0) return out;
  const Matrix kl = base_kl(config, q);
  const Matrix zbar = mean_codes(config, q);
  const double need = (1.0 - delta) * static_cast<double>(n);
  Index posterior = 0, feature = 0;
  for (Index i = 0; i < d; ++i) {
    const auto small_kl = (kl.row(i).array() <= eps).count();
    const auto small_z = (zbar.row(i).array().abs() <= eps).count();
    if (static_cast<double>(small_kl) >= need) ++posterior;
    if (static_cast<double>(small_z) >= need) ++feature;
  }
  out.posterior_collapse_pct = 100.0 * static_cast<double>(posterior) / static_cast<double>(d);
  out.feature_collapse_pct = 100.0 * static_cast<double>(feature) / static_cast<double>(d);
  return out;
}

Matrix estimate_dictionary(const Matrix& X, const Matrix& Z, double ridge) {
  if (X.cols() != Z.cols()) throw ShapeError("estimate_dictionary: X and Z need the same number of columns");
  if (ridge < 0) throw std::invalid_argument("estimate_dictionary: ridge must be non-negative");
  Matrix gram = Z * Z.transpose();
  gram.diagonal().array() += ridge;
  const Eigen::LLT<Matrix> llt(gram);
  if (llt.info() != Eigen::Success) throw NumericalError("estimate_dictionary: Z Z^T is not positive definite");
  const Matrix rhs = Z * X.transpose();
  return llt.solve(rhs).transpose();
}

double point_biserial(const std::vector<int>& y, const Eigen::VectorXd& z) {
  if (static_cast<Index>(y.size()) != z.size()) throw ShapeError("point_biserial: label and value counts differ");
  double s1 = 0.0, s0 = 0.0;
  Index n1 = 0, n0 = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 1) {
      s1 += z(static_cast<Index>(i));
      ++n1;
    } else if (y[i] == 0) {
      s0 += z(static_cast<Index>(i));
      ++n0;
    } else {
      throw std::invalid_argument("point_biserial: labels must be 0 or 1");
    }
  }
  if (n1 == 0 || n0 == 0) throw std::invalid_argument("point_biserial: both groups must be non-empty");
  const double N = static_cast<double>(z.size());
  const double sd = std::sqrt((z.array() - z.mean()).square().sum() / N);
  if (!(sd > 0)) throw std::invalid_argument("point_biserial: constant values");
  const double m1 = s1 / static_cast<double>(n1), m0 = s0 / static_cast<double>(n0);
  return (m1 - m0) / sd * std::sqrt(static_cast<double>(n1) * static_cast<double>(n0)) / N;
}

AtomMatch match_atoms(const Matrix& truth, const Matrix& learned, double threshold) {
  if (truth.rows() != learned.rows()) throw ShapeError("match_atoms: atoms differ in dimension");
  auto unit = [](const Matrix& M) {
    Matrix U = M;
    for (Index j = 0; j < U.cols(); ++j) {
      const double nrm = U.col(j).norm();
      if (nrm > 0) U.col(j) /= nrm;
    }
    return U;
  };
  const Matrix C = (unit(truth).transpose() * unit(learned)).cwiseAbs();
  std::vector<std::pair<double, std::pair<Index, Index>>> pairs;
  pairs.reserve(static_cast<std::size_t>(C.size()));
  for (Index j = 0; j < C.cols(); ++j) {
    for (Index i = 0; i < C.rows(); ++i) pairs.push_back({C(i, j), {i, j}});
  }
  std::stable_sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<bool> used_t(static_cast<std::size_t>(C.rows())), used_l(static_cast<std::size_t>(C.cols()));
  AtomMatch out;
  for (const auto& [c, ij] : pairs) {
    const auto [i, j] = ij;
    if (used_t[static_cast<std::size_t>(i)] || used_l[static_cast<std::size_t>(j)]) continue;
    used_t[static_cast<std::size_t>(i)] = true;
    used_l[static_cast<std::size_t>(j)] = true;
    out.cosines.push_back(c);
    if (c > threshold) ++out.matched;
  }
  return out;
}

namespace {

template <class T>
nlohmann::ordered_json opt(const std::optional<T>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

template <class T>
std::string cell(const std::optional<T>& v) {
  if (!v) return "";
  if constexpr (std::is_floating_point_v<T>) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", *v);
    return buf;
  } else {
    return std::to_string(*v);
  }
}

}  // namespace

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["method"] = method;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  j["validation_loss"] = opt(validation_loss);
  j["multi_information"] = opt(multi_information);
  j["iwae_loss"] = opt(iwae_loss);
  j["snr_encoder"] = opt(snr_encoder);
  j["snr_generator"] = opt(snr_generator);
  j["snr_excluded"] = opt(snr_excluded);
  j["jaccard_mean"] = opt(jaccard_mean);
  j["jaccard_histogram"] = jaccard_histogram;
  j["posterior_collapse_pct"] = opt(posterior_collapse_pct);
  j["feature_collapse_pct"] = opt(feature_collapse_pct);
  j["nonzero_fraction"] = opt(nonzero_fraction);
  return j.dump(2);
}

std::string MetricsReport::csv_header() {
  return "method,seed,config_hash,validation_loss,multi_information,iwae_loss,snr_encoder,snr_generator,"
         "snr_excluded,jaccard_mean,posterior_collapse_pct,feature_collapse_pct,nonzero_fraction";
}

std::string MetricsReport::to_csv_row() const {
  std::ostringstream os;
  os << method << ',' << seed << ',' << config_hash << ',' << cell(validation_loss) << ','
     << cell(multi_information) << ',' << cell(iwae_loss) << ',' << cell(snr_encoder) << ',' << cell(snr_generator)
     << ',' << cell(snr_excluded) << ',' << cell(jaccard_mean) << ',' << cell(posterior_collapse_pct) << ','
     << cell(feature_collapse_pct) << ',' << cell(nonzero_fraction);
  return os.str();
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace vsc
