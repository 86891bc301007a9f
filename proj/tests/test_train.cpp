// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include "vsc/data.hpp"

#include <doctest.h>

using namespace vsc;
using namespace vsc::testing;

namespace {

PatchDataset tiny_data(Index count = 300, std::uint64_t seed = 1) {
  SyntheticSpec s;
  s.data_dim = 6;
  s.latent_dim = 4;
  s.sparsity = 2;
  s.count = count;
  s.seed = seed;
  return synthesize(s);
}

TrainConfig quick_config(int epochs = 3) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 50;
  c.seed = 5;
  c.val_lambda = 1.0;
  return c;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("one-cycle schedule") {
  TrainConfig c;
  c.enc_lr_max = 1e-2;
  const long total = 1000;
  CHECK(schedule_lr(0, 0, total, c).enc == doctest::Approx(1e-3));
  CHECK(schedule_lr(300, 0, total, c).enc == doctest::Approx(1e-2));
  CHECK(schedule_lr(150, 0, total, c).enc == doctest::Approx(5.5e-3));
  CHECK(schedule_lr(999, 0, total, c).enc == doctest::Approx(1e-4));
  CHECK(schedule_lr(0, 10, total, c).dict == doctest::Approx(0.5 * std::pow(0.99, 10)));
  double prev = 1.0;
  for (long t = 300; t < total; ++t) {
    const double lr = schedule_lr(t, 0, total, c).enc;
    CHECK(lr <= prev + 1e-15);
    prev = lr;
  }
}

TEST_CASE("invalid training configurations") {
  TrainConfig c;
  c.samples = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.momentum = 1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.enc_grad_clip = -1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("Nesterov step matches the hand-computed update") {
  const PatchDataset data = tiny_data(50);
  const EncoderConfig enc = small_encoder(PriorKind::laplacian);
  VariationalModel model = init_model(enc, 6, 2, 1e-4);
  const VariationalModel before = model;
  TrainConfig cfg = quick_config();
  Rng r1 = make_stream(1, 1), r2 = make_stream(1, 1);
  const LossGradients g = loss_gradients(model, data.patches, 1, Sampling::max, cfg.objective, r1);
  OptimizerState opt;
  const LearningRates lr{0.1, 0.01};
  train_step(model, opt, data.patches, cfg, lr, r2);
  for (std::size_t i = 0; i < g.encoder.size(); ++i) {
    const Matrix expect = before.encoder.params[i] - 0.01 * (1.0 + cfg.momentum) * g.encoder[i];
    CHECK((model.encoder.params[i] - expect).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(opt.momentum[i].isApprox(g.encoder[i]));
  }
  CHECK((model.dict.A - (before.dict.A - 0.1 * g.dict)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gradient clipping bounds the encoder step") {
  const PatchDataset data = tiny_data(50);
  VariationalModel model = init_model(small_encoder(PriorKind::thresh_laplacian), 6, 2, 1e-4);
  const VariationalModel before = model;
  TrainConfig cfg = quick_config();
  cfg.enc_grad_clip = 1e-3;
  cfg.momentum = 0.0;
  Rng rng = make_stream(2, 2);
  OptimizerState opt;
  train_step(model, opt, data.patches, cfg, {1e-12, 1.0}, rng);
  double sq = 0.0;
  for (std::size_t i = 0; i < model.encoder.params.size(); ++i) {
    sq += (model.encoder.params[i] - before.encoder.params[i]).squaredNorm();
  }
  CHECK(std::sqrt(sq) == doctest::Approx(1e-3).epsilon(1e-6));
}

TEST_CASE("training is deterministic and logs every epoch") {
  const PatchDataset data = tiny_data();
  const Split split = split_validation(data.patches, 1.0 / 6.0, 3);
  const EncoderConfig enc = small_encoder(PriorKind::thresh_laplacian);
  int calls = 0;
  const TrainResult a = train(split.train, split.val, quick_config(), enc, [&](const EpochLog&, const VariationalModel&) { ++calls; });
  const TrainResult b = train(split.train, split.val, quick_config(), enc);
  CHECK(calls == 3);
  REQUIRE(a.log.size() == 3);
  CHECK(a.log.back().iteration == 15);
  CHECK(a.model.warmup.iteration == 15);
  CHECK(a.model.dict.A == b.model.dict.A);
  CHECK(a.model.encoder.params == b.model.encoder.params);
  CHECK(to_json(a.log.back()) == to_json(b.log.back()));
  CHECK(to_json(a.log[0]).find("\"val_loss\"") != std::string::npos);
  CHECK(std::isfinite(a.log.back().val_loss));
}

TEST_CASE("training reduces the loss on a small problem") {
  const PatchDataset data = tiny_data(600, 4);
  TrainConfig cfg = quick_config(25);
  const TrainResult r = train(data.patches, data.patches.leftCols(100), cfg, small_encoder(PriorKind::laplacian));
  CHECK(r.log.back().train_loss < r.log.front().train_loss);
}

TEST_CASE("shape errors are reported before training") {
  const PatchDataset data = tiny_data(60);
  CHECK_THROWS_AS(train(data.patches, Matrix::Zero(5, 3), quick_config(), small_encoder(PriorKind::gaussian)), ShapeError);
  CHECK_THROWS_AS(train(Matrix::Zero(6, 0), Matrix(), quick_config(), small_encoder(PriorKind::gaussian)),
                  std::invalid_argument);
}

TEST_CASE("a non-finite step aborts with the iteration") {
  const PatchDataset data = tiny_data(100);
  VariationalModel model = init_model(small_encoder(PriorKind::laplacian), 6, 2, 1e-4);
  model.dict.A(0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    train(model, data.patches, Matrix(), quick_config());
    FAIL("expected TrainingAborted");
  } catch (const TrainingAborted& e) {
    CHECK(e.iteration() == 0);
  }
}

TEST_CASE("validation codes use a fixed stream") {
  const PatchDataset data = tiny_data(40);
  const VariationalModel model = init_model(small_encoder(PriorKind::thresh_laplacian), 6, 2, 1e-4);
  CHECK(validation_codes(model, data.patches, 3) == validation_codes(model, data.patches, 3));
  CHECK_FALSE(validation_codes(model, data.patches, 3) == validation_codes(model, data.patches, 4));
  CHECK(validation_objective(model, Matrix(6, 0), 1.0, 3) == 0.0);
}

}

TEST_SUITE("fista") {

TEST_CASE("objective helpers") {
  const Matrix A = random_matrix(3, 4, 1), X = random_matrix(3, 2, 2), Z = random_matrix(4, 2, 3);
  const Eigen::RowVectorXd per = sparse_objective(A, X, Z, 0.5);
  CHECK(per(1) == doctest::Approx((X.col(1) - A * Z.col(1)).squaredNorm() + 0.5 * Z.col(1).lpNorm<1>()));
  CHECK(dictionary_objective(A, X, Z, 0.5, 0.1) == doctest::Approx(per.mean() + 0.1 * A.squaredNorm()));
}

TEST_CASE("power iteration finds the top eigenvalue") {
  const Matrix A = random_matrix(8, 16, 4);
  const Eigen::SelfAdjointEigenSolver<Matrix> es(A.transpose() * A);
  CHECK(top_eigenvalue_ata(A, 500, 1e-12) == doctest::Approx(es.eigenvalues().maxCoeff()).epsilon(1e-6));
  CHECK(fista_lipschitz(Matrix::Zero(3, 3)) == 0.0);
}

TEST_CASE("FISTA matches coordinate descent") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix A = random_matrix(8, 16, 100 + seed);
    const Matrix X = random_matrix(8, 3, 200 + seed, 2.0);
    const double lambda = 0.5 + 0.2 * static_cast<double>(seed);
    const FistaResult r = fista_infer(A, X, lambda, 20000, 1e-15);
    for (Index k = 0; k < X.cols(); ++k) {
      const Vector z = lasso_coordinate_descent(A, X.col(k), lambda);
      const double oracle = sparse_objective(A, X.col(k), z, lambda)(0);
      CHECK(sparse_objective(A, X.col(k), r.Z.col(k), lambda)(0) == doctest::Approx(oracle).epsilon(1e-9));
    }
  }
}

TEST_CASE("FISTA edge cases") {
  const Matrix A = random_matrix(4, 6, 5), X = random_matrix(4, 3, 6);
  const double lmax = 2.0 * (A.transpose() * X).cwiseAbs().maxCoeff();
  CHECK(fista_infer(A, X, lmax * 1.01, 100, 1e-9).Z.isZero());
  const FistaResult z0 = fista_infer(Matrix::Zero(4, 6), X, 1.0, 10, 1e-9);
  CHECK(z0.Z.isZero());
  CHECK(z0.objective == doctest::Approx(X.colwise().squaredNorm().mean()));
  CHECK(fista_infer(A, Matrix(4, 0), 1.0, 10, 1e-9).Z.cols() == 0);
  CHECK_THROWS_AS(fista_infer(A, random_matrix(3, 2, 1), 1.0, 10, 1e-9), ShapeError);
  CHECK_THROWS_AS(fista_infer(A, X, -1.0, 10, 1e-9), std::invalid_argument);
  const Matrix warm = fista_infer(A, X, 0.3, 5000, 1e-14).Z;
  CHECK(fista_infer(A, X, 0.3, 5000, 1e-14, &warm).iterations < 5);
}

TEST_CASE("columns are solved independently") {
  const Matrix A = random_matrix(5, 7, 7), X = random_matrix(5, 4, 8);
  const FistaResult all = fista_infer(A, X, 0.4, 300, -1.0);
  const FistaResult one = fista_infer(A, X.col(2), 0.4, 300, -1.0);
  CHECK((all.Z.col(2) - one.Z).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("dictionary learning keeps the Frobenius norm bounded") {
  SyntheticSpec s;
  s.data_dim = 16;
  s.latent_dim = 16;
  s.sparsity = 2;
  s.count = 400;
  const PatchDataset data = synthesize(s);
  FistaConfig cfg;
  cfg.lambda = 0.5;
  cfg.max_iters = 100;
  FistaTrainConfig train;
  train.epochs = 10;
  train.batch_size = 50;
  double first = 0;
  const FistaRun run = fista_dictionary_learn(data.patches, cfg, train, 16, nullptr,
                                              [&](const FistaEpochLog& l) { if (l.epoch == 0) first = l.train_objective; });
  REQUIRE(run.log.size() == 10);
  CHECK(run.log.back().train_objective < first);
  CHECK(run.log.back().dict_norm < 10 * std::sqrt(16.0));
  CHECK(run.log.front().lambda_effective < cfg.lambda);
  CHECK(run.dict.kappa == cfg.kappa);
  const Dictionary wrong{Matrix::Zero(3, 3), 0.0};
  CHECK_THROWS_AS(fista_dictionary_learn(data.patches, cfg, train, 16, &wrong), ShapeError);
}

}
