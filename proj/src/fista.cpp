// SPDX-License-Identifier: Apache-2.0

#include "vsc/fista.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace vsc {

namespace {
constexpr std::uint64_t kShuffleStream = 0x5AF;
}

void FistaConfig::validate() const {
  if (lambda < 0) throw std::invalid_argument("fista: lambda must be non-negative");
  if (kappa < 0) throw std::invalid_argument("fista: kappa must be non-negative");
  if (max_iters < 1) throw std::invalid_argument("fista: max_iters must be >= 1");
  if (!(tol >= 0)) throw std::invalid_argument("fista: tol must be non-negative");
  if (!(warmup_start > 0) || warmup_step < 0) throw std::invalid_argument("fista: invalid warm-up");
}

FistaRun fista_dictionary_learn(const Matrix& X, const FistaConfig& config, const FistaTrainConfig& train,
                                Index latent_dim, const Dictionary* init,
                                const std::function<void(const FistaEpochLog&)>& on_epoch) {
  config.validate();
  if (train.batch_size < 1) throw std::invalid_argument("fista: batch_size must be >= 1");
  if (!(train.dict_lr > 0)) throw std::invalid_argument("fista: dict_lr must be positive");
  FistaRun run;
  run.dict = init ? *init : init_dictionary(X.rows(), latent_dim, train.seed, config.kappa);
  run.dict.kappa = config.kappa;
  Matrix& A = run.dict.A;
  if (A.rows() != X.rows()) throw ShapeError("fista: dictionary and data disagree on the data dimension");

  const Index n = X.cols();
  Matrix codes = Matrix::Zero(A.cols(), n);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng shuffle = make_stream(train.seed, kShuffleStream);
  long iteration = 0;

  for (int epoch = 0; epoch < train.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle);
    const double lr = train.dict_lr * std::pow(train.dict_lr_decay, epoch);
    FistaEpochLog log;
    log.epoch = epoch;
    log.dict_lr = lr;
    double objective = 0.0;
    double nonzero = 0.0;
    for (Index start = 0; start < n; start += train.batch_size) {
      const Index m = std::min(train.batch_size, n - start);
      Matrix xb(X.rows(), m), z0(A.cols(), m);
      for (Index j = 0; j < m; ++j) {
        const Index col = order[static_cast<std::size_t>(start + j)];
        xb.col(j) = X.col(col);
        z0.col(j) = codes.col(col);
      }
      const double lam = config.omega(iteration) * config.lambda;
      auto res = fista_infer(A, xb, lam, config.max_iters, config.tol, train.warm_start ? &z0 : nullptr);
      for (Index j = 0; j < m; ++j) codes.col(order[static_cast<std::size_t>(start + j)]) = res.Z.col(j);
      objective += res.objective * static_cast<double>(m);
      nonzero += static_cast<double>((res.Z.array() != 0.0).count());
      const Matrix grad = (2.0 / static_cast<double>(m)) * (A * res.Z - xb) * res.Z.transpose() + 2.0 * config.kappa * A;
      A -= lr * grad;
      if (!A.allFinite()) throw NumericalError("fista: non-finite dictionary at iteration " + std::to_string(iteration));
      log.lambda_effective = lam;
      ++iteration;
    }
    log.iteration = iteration;
    log.train_objective = n > 0 ? objective / static_cast<double>(n) + config.kappa * A.squaredNorm() : 0.0;
    log.nonzero_fraction = n > 0 ? nonzero / static_cast<double>(n * A.cols()) : 0.0;
    log.dict_norm = A.norm();
    run.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return run;
}

}  // namespace vsc
