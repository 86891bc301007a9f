// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include "vsc/generator.hpp"

#include <doctest.h>

using namespace vsc;
using namespace vsc::testing;

TEST_SUITE("encoder") {

TEST_CASE("prior names round-trip") {
  for (const PriorKind k : kAllPriors) CHECK(parse_prior_kind(to_string(k)) == k);
  CHECK_THROWS_AS(parse_prior_kind("cauchy"), std::invalid_argument);
}

TEST_CASE("parameter shapes and head initialisation") {
  EncoderConfig cfg = small_encoder(PriorKind::thresh_laplacian_gamma);
  const Encoder enc = init_encoder(cfg, 3);
  CHECK(enc.params.get("backbone.0.weight").rows() == 8);
  CHECK(enc.params.get("backbone.0.weight").cols() == 6);
  CHECK(enc.params.get("head.shift.weight").rows() == 4);
  CHECK(enc.params.get("head.log_scale.bias").isApprox(Matrix::Constant(4, 1, std::log(0.1))));
  CHECK(enc.params.get("head.log_alpha.bias").isApprox(Matrix::Constant(4, 1, std::log(3.0))));
  CHECK(enc.params.get("head.log_beta.bias").isApprox(Matrix::Constant(4, 1, std::log(3.0 / 0.05))));
  const double bound = 1 / std::sqrt(6.0);
  CHECK(enc.params.get("backbone.0.weight").cwiseAbs().maxCoeff() <= bound);
  CHECK_THROWS_AS(enc.params.get("head.spike_logit.bias"), std::out_of_range);

  const Encoder ss = init_encoder(small_encoder(PriorKind::spike_slab), 3);
  CHECK(ss.params.get("head.spike_logit.bias")(0) == doctest::Approx(std::log(0.1 / 0.9)));
  CHECK(init_encoder(cfg, 3).params == enc.params);
  CHECK_FALSE(init_encoder(cfg, 4).params == enc.params);
}

TEST_CASE("backbone widths scale with the latent size") {
  CHECK(EncoderConfig::scaled_hidden(256) == std::vector<Index>{512, 1024, 512, 256});
  CHECK(EncoderConfig::scaled_hidden(64) == std::vector<Index>{128, 256, 128, 64});
}

TEST_CASE("invalid configurations are rejected") {
  EncoderConfig cfg = small_encoder(PriorKind::thresh_laplacian);
  cfg.prior_scale = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_encoder(PriorKind::thresh_laplacian_gamma);
  cfg.lambda0 = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_encoder(PriorKind::spike_slab);
  cfg.spike_prior = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("warm-up schedules") {
  CHECK(WarmupState::at(0).omega == doctest::Approx(0.1));
  CHECK(WarmupState::at(2250).omega == doctest::Approx(0.55));
  CHECK(WarmupState::at(4500).omega == doctest::Approx(1.0));
  CHECK(WarmupState::at(9000).omega == 1.0);
  CHECK(WarmupState::at(0).tau == 1.0);
  CHECK(WarmupState::at(100).tau == doctest::Approx(std::pow(0.9995, 100)));
  CHECK(WarmupState::at(5000).tau == 0.5);
  CHECK(WarmupState::at(1500).kl_ramp == 0.0);
  CHECK(WarmupState::at(4000).kl_ramp == doctest::Approx(0.5));
  CHECK(WarmupState::at(7000).kl_ramp == 1.0);
  WarmupState w;
  w.advance();
  CHECK(w.iteration == 1);
}

TEST_CASE("omega scales the posterior scale head") {
  const EncoderConfig lap = small_encoder(PriorKind::laplacian);
  const EncoderConfig gau = small_encoder(PriorKind::gaussian);
  const Matrix x = random_matrix(6, 3, 5);
  for (const auto* cfg : {&lap, &gau}) {
    const Encoder enc = init_encoder(*cfg, 1);
    const PosteriorValues full = infer_posterior(enc, x, WarmupState::settled());
    const PosteriorValues warm = infer_posterior(enc, x, WarmupState::at(0));
    const double power = laplace_base(cfg->prior) ? 1.0 : 2.0;
    CHECK((warm.log_scale.array() - full.log_scale.array()).isApproxToConstant(power * std::log(0.1)));
    CHECK(warm.shift.isApprox(full.shift));
  }
}

TEST_CASE("chunked inference matches one pass") {
  const Encoder enc = init_encoder(small_encoder(PriorKind::thresh_gaussian_gamma), 2);
  const Matrix x = random_matrix(6, 11, 6);
  const PosteriorValues a = infer_posterior(enc, x, WarmupState::settled(), 3);
  const PosteriorValues b = infer_posterior(enc, x, WarmupState::settled(), 64);
  CHECK(a.shift.isApprox(b.shift));
  CHECK(a.log_alpha.isApprox(b.log_alpha));
  CHECK_THROWS_AS(infer_posterior(enc, random_matrix(5, 2, 1), WarmupState::settled()), ShapeError);
}

}

TEST_SUITE("generator") {

TEST_CASE("dictionary init has unit columns") {
  const Dictionary d = init_dictionary(16, 24, 7);
  CHECK(d.A.rows() == 16);
  CHECK((d.A.colwise().norm().array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("log-likelihood and penalty") {
  const Matrix A = random_matrix(4, 3, 1), Z = random_matrix(3, 5, 2), X = random_matrix(4, 5, 3);
  const Eigen::RowVectorXd per = log_likelihood_per_datum(A, X, Z);
  for (Index k = 0; k < 5; ++k) CHECK(per(k) == doctest::Approx(-(X.col(k) - A * Z.col(k)).squaredNorm()));
  CHECK(log_likelihood(A, X, Z) == doctest::Approx(per.mean()));
  CHECK(log_likelihood(A, X, (A.transpose() * A).ldlt().solve(A.transpose() * X).eval()) <= 0.0);
  CHECK(frobenius_penalty(A, 0.5) == doctest::Approx(0.5 * A.squaredNorm()));
  CHECK_THROWS_AS(frobenius_penalty(A, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(log_likelihood(A, X, random_matrix(2, 5, 1)), ShapeError);

  Tape tape;
  const Tensor tA = tape.leaf(A);
  CHECK(log_likelihood(tA, tape.constant(X), tape.constant(Z)).item() == doctest::Approx(per.mean()));
  CHECK(frobenius_penalty(tA, 0.5).item() == doctest::Approx(0.5 * A.squaredNorm()));
}

TEST_CASE("log-likelihood gradients") {
  const std::vector<Matrix> in = {random_matrix(4, 3, 1), random_matrix(3, 5, 2)};
  const Matrix X = random_matrix(4, 5, 3);
  MultiFn f = [&](Tape& t, std::span<const Tensor> v) {
    return log_likelihood(v[0], t.constant(X), v[1]) - frobenius_penalty(v[0], 0.1);
  };
  std::vector<Probe> probes;
  for (std::size_t k = 0; k < 2; ++k)
    for (Index i = 0; i < in[k].size(); ++i) probes.push_back({k, i});
  CHECK(grad_check(f, in, 1e-6, probes).max_rel_error < 1e-5);
}

}

TEST_SUITE("objective") {

TEST_CASE("aggregation") {
  const std::vector<double> v = {1.0, 4.0, 4.0, 2.0};
  CHECK(aggregate_avg(v) == doctest::Approx(2.75));
  CHECK(aggregate_max(v) == std::pair<double, std::size_t>{4.0, 1});
  CHECK_THROWS_AS(aggregate_avg(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("max aggregation is at least the average per datum") {
  Tape tape;
  std::vector<Tensor> totals;
  for (int j = 0; j < 5; ++j) totals.push_back(tape.leaf(random_matrix(1, 7, 10 + j)));
  const Aggregate mx = aggregate(totals, Sampling::max);
  const Aggregate av = aggregate(totals, Sampling::avg);
  CHECK((mx.value.value().array() >= av.value.value().array() - 1e-15).all());
  CHECK(mx.selected.size() == 7);
  CHECK(av.selected.empty());
}

TEST_CASE("ELBO with one sample equals its parts") {
  for (const PriorKind prior : kAllPriors) {
    CAPTURE(to_string(prior));
    const LossProbe p = make_loss_probe(prior, 1, Sampling::avg, Estimator::straight_through, 3);
    Tape tape;
    std::vector<Tensor> leaves;
    for (const auto& m : p.inputs) leaves.push_back(tape.constant(m));
    const Tensor xt = tape.constant(p.x);
    const PosteriorParams q = encode(std::span<const Tensor>(leaves).first(leaves.size() - 1), xt, p.encoder, p.warmup);
    const ElboTerms t = elbo_sample(xt, q, leaves.back(), p.encoder, p.objective, p.warmup, p.noise[0]);
    const double kl_w = prior == PriorKind::spike_slab ? p.objective.beta_kl * p.warmup.kl_ramp : p.objective.beta_kl;
    Matrix expect = t.recon.value() - kl_w * t.kl_base.value();
    if (t.kl_gamma.valid()) expect -= p.objective.beta_gamma * t.kl_gamma.value();
    CHECK(t.total.value().isApprox(expect));
    CHECK(t.recon.value().isApprox(log_likelihood_per_datum(p.inputs.back(), p.x, t.code.value())));
    CHECK((t.kl_base.value().array() >= -1e-12).all());
    if (is_thresholded(prior) || prior == PriorKind::spike_slab) {
      CHECK((t.code.value().array() == 0.0).any());
    }
  }
}

TEST_CASE("full loss gradients for every prior") {
  for (const PriorKind prior : kAllPriors) {
    for (const Sampling s : {Sampling::avg, Sampling::max}) {
      CAPTURE(to_string(prior));
      CAPTURE(to_string(s));
      const LossProbe p = make_loss_probe(prior, 3, s, Estimator::straight_through, 4);
      const auto probes = random_probes(p.inputs, 40, 5);
      CHECK(grad_check(p.fn(), p.inputs, 1e-6, probes).max_rel_error < 1e-5);
    }
  }
  const LossProbe sub = make_loss_probe(PriorKind::thresh_laplacian, 2, Sampling::max, Estimator::subgradient, 6);
  CHECK(grad_check(sub.fn(), sub.inputs, 1e-6, random_probes(sub.inputs, 40, 7)).max_rel_error < 1e-5);
}

TEST_CASE("mean codes match sample averages") {
  for (const PriorKind prior : kAllPriors) {
    CAPTURE(to_string(prior));
    EncoderConfig cfg = small_encoder(prior);
    const Encoder enc = init_encoder(cfg, 8);
    PosteriorValues q = infer_posterior(enc, random_matrix(6, 2, 9, 3.0), WarmupState::settled());
    q.shift.array() += 0.3;
    Rng rng = make_stream(10, 10);
    Matrix acc = Matrix::Zero(q.latent_dim(), q.cols());
    const int n = 40000;
    for (int i = 0; i < n; ++i) acc += sample_codes(cfg, q, rng);
    acc /= n;
    const Matrix mean = mean_codes(cfg, q);
    CHECK((acc - mean).cwiseAbs().maxCoeff() < 0.01);
  }
}

TEST_CASE("IWAE bound tightens with K and never exceeds the data fit") {
  const EncoderConfig cfg = small_encoder(PriorKind::gaussian);
  const Encoder enc = init_encoder(cfg, 11);
  const Matrix x = random_matrix(6, 20, 12, 0.3);
  const PosteriorValues q = infer_posterior(enc, x, WarmupState::settled());
  const Matrix A = init_dictionary(6, 4, 13).A;
  double b1 = 0, b50 = 0;
  for (int r = 0; r < 20; ++r) {
    Rng r1 = make_stream(r, 1), r2 = make_stream(r, 2);
    b1 += iwae_bound(cfg, q, A, x, 1, r1).mean();
    b50 += iwae_bound(cfg, q, A, x, 50, r2).mean();
  }
  CHECK(b50 > b1);
  Rng rng = make_stream(0, 3), same = make_stream(0, 3);
  CHECK(iwae_loss(cfg, q, A, x, 5, rng) == doctest::Approx(-iwae_bound(cfg, q, A, x, 5, same).mean()));
  CHECK_THROWS_AS(iwae_bound(cfg, q, A, x, 0, rng), std::invalid_argument);
}

TEST_CASE("estimator and sampling names round-trip") {
  CHECK(parse_estimator(to_string(Estimator::subgradient)) == Estimator::subgradient);
  CHECK(parse_sampling(to_string(Sampling::avg)) == Sampling::avg);
  CHECK_THROWS_AS(parse_sampling("median"), std::invalid_argument);
}

}
