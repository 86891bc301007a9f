// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include <doctest.h>

using namespace vsc;
using namespace vsc::testing;

TEST_SUITE("dist") {

TEST_CASE("shifted soft-threshold values") {
  CHECK(shifted_soft_threshold(0.3, 0.5, 0.0) == 0.0);
  CHECK(shifted_soft_threshold(0.8, 0.5, 0.0) == doctest::Approx(0.3));
  CHECK(shifted_soft_threshold(-0.8, 0.5, 0.0) == doctest::Approx(-0.3));
  // mu shifts the band and the surviving tails back toward mu
  CHECK(shifted_soft_threshold(1.2, 0.5, 1.0) == 0.0);
  CHECK(shifted_soft_threshold(2.0, 0.5, 1.0) == doctest::Approx(1.5));
  CHECK(shifted_soft_threshold(0.0, 0.5, 1.0) == doctest::Approx(0.5));
  CHECK(shifted_soft_threshold(0.4, 0.0, 0.0) == doctest::Approx(0.4));
}

TEST_CASE("threshold is odd in s - mu and never lands inside the band") {
  Rng rng = make_stream(1, 1);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int i = 0; i < 1000; ++i) {
    const double s = n(rng), mu = n(rng), lam = std::abs(n(rng));
    const double z = shifted_soft_threshold(s, lam, mu);
    const double mirrored = shifted_soft_threshold(2 * mu - s, lam, mu);
    if (z != 0.0) {
      CHECK(z + mirrored == doctest::Approx(2 * mu));
      CHECK(std::abs(s - mu) > lam);
    } else {
      CHECK(mirrored == 0.0);
    }
  }
}

TEST_CASE("spike probability matches Monte Carlo for any shift") {
  for (const double mu : {0.0, 0.7, -2.0}) {
    const double lam = 0.25, b = 0.1;
    Rng rng = make_stream(2, 2);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    const int n = 200000;
    int zeros = 0;
    for (int i = 0; i < n; ++i) zeros += shifted_soft_threshold(laplace_from_uniform(u(rng), mu, b), lam, mu) == 0.0;
    CHECK(static_cast<double>(zeros) / n == doctest::Approx(spike_probability(lam, b)).epsilon(0.01));
  }
  CHECK(spike_probability(0.0, 1.0) == 0.0);
  CHECK_THROWS_AS(spike_probability(-1.0, 1.0), std::invalid_argument);
}

TEST_CASE("threshold calibration for a target nonzero fraction") {
  CHECK(laplace_threshold_for_nonzero(0.1, 0.1) == doctest::Approx(0.2302585).epsilon(1e-6));
  const double sigma = std::sqrt(0.1);
  const double lam = gaussian_threshold_for_nonzero(0.1, sigma);
  CHECK(1 - gaussian_spike_probability(lam, sigma) == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(lam == doctest::Approx(1.6448536 * sigma).epsilon(1e-6));
}

TEST_CASE("Gaussian KL matches quadrature") {
  for (auto [mu, s, s0] : {std::tuple{0.0, 1.0, 1.0}, {0.5, 0.3, 1.0}, {-1.0, 2.0, 0.316}, {0.1, 0.05, 0.316}}) {
    CHECK(kl_gaussian(mu, s, s0) == doctest::Approx(quad_kl_gaussian(mu, s, s0)).epsilon(1e-7));
  }
  CHECK(kl_gaussian(0.3, 0.2, 0.2) == doctest::Approx(0.3 * 0.3 / (2 * 0.04)));
}

TEST_CASE("Laplacian KL matches quadrature") {
  for (auto [mu, b, b0] : {std::tuple{0.0, 0.1, 0.1}, {0.5, 0.2, 0.1}, {-0.3, 1.0, 0.1}, {2.0, 0.05, 1.0}}) {
    CHECK(kl_laplacian(mu, b, b0) == doctest::Approx(quad_kl_laplacian(mu, b, b0)).epsilon(1e-6));
  }
  CHECK(kl_laplacian(0.0, 0.1, 0.1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("Gamma KL matches quadrature") {
  for (auto [a, b, a0, b0] : {std::tuple{3.0, 6.0, 3.0, 12.0}, {1.0, 1.0, 3.0, 13.0}, {10.0, 2.0, 3.0, 6.0}}) {
    CHECK(kl_gamma(a, b, a0, b0) == doctest::Approx(quad_kl_gamma(a, b, a0, b0)).epsilon(1e-6));
  }
  CHECK(kl_gamma(3.0, 6.0, 3.0, 6.0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("Bernoulli KL") {
  CHECK(kl_bernoulli(0.1, 0.1) == doctest::Approx(0.0));
  CHECK(kl_bernoulli(0.5, 0.1) == doctest::Approx(0.5 * std::log(5.0) + 0.5 * std::log(0.5 / 0.9)));
  CHECK(kl_bernoulli(0.0, 0.2) == doctest::Approx(std::log(1 / 0.8)));
  CHECK(kl_bernoulli(1.0, 0.2) == doctest::Approx(std::log(5.0)));
}

TEST_CASE("Laplace inverse CDF reproduces the distribution") {
  Rng rng = make_stream(3, 3);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  const double mu = 0.4, b = 0.3;
  const int n = 200000;
  double m1 = 0, m2 = 0;
  for (int i = 0; i < n; ++i) {
    const double v = laplace_from_uniform(u(rng), mu, b);
    m1 += v;
    m2 += (v - mu) * (v - mu);
  }
  CHECK(m1 / n == doctest::Approx(mu).epsilon(0.01));
  CHECK(m2 / n == doctest::Approx(2 * b * b).epsilon(0.02));
  CHECK(laplace_cdf(laplace_from_uniform(0.25, mu, b), mu, b) == doctest::Approx(0.75));
}

TEST_CASE("Gamma sampler moments and quantile") {
  for (auto [a, b] : {std::pair{3.0, 6.0}, {0.5, 2.0}, {20.0, 1.0}}) {
    Rng rng = make_stream(4, 4);
    const int n = 100000;
    double m1 = 0, m2 = 0;
    for (int i = 0; i < n; ++i) {
      const double z = draw_gamma(a, b, rng);
      m1 += z;
      m2 += z * z;
    }
    m1 /= n;
    m2 = m2 / n - m1 * m1;
    CHECK(m1 == doctest::Approx(a / b).epsilon(0.02));
    CHECK(m2 == doctest::Approx(a / (b * b)).epsilon(0.05));
    for (const double p : {0.01, 0.5, 0.99}) {
      CHECK(special::gamma_p(a, b * gamma_quantile(p, a, b)) == doctest::Approx(p).epsilon(1e-8));
    }
  }
}

TEST_CASE("Gamma implicit gradient matches the quantile derivative") {
  for (auto [a, b] : {std::pair{3.0, 6.0}, {1.0, 1.0}, {0.7, 3.0}}) {
    for (const double u : {0.1, 0.5, 0.9}) {
      const double z = gamma_quantile(u, a, b);
      const double h = 1e-5 * a;
      const double numeric = (gamma_quantile(u, a + h, b) - gamma_quantile(u, a - h, b)) / (2 * h);
      CHECK(gamma_sample_grad_alpha(z, a, b) == doctest::Approx(numeric).epsilon(1e-5));
    }
  }
}

TEST_CASE("thresholded sample tensors") {
  Tape tape;
  Matrix sv(1, 4);
  sv << -1.0, 0.05, 0.2, 1.0;
  const Tensor s = tape.leaf(sv);
  const Tensor lam = tape.constant(0.3);
  const Tensor mu = tape.leaf(Matrix::Constant(1, 4, 0.1));
  const Tensor hard = shifted_soft_threshold(s, lam, mu);
  const Tensor st = st_threshold(s, lam, mu);
  Matrix expected(1, 4);
  expected << -0.7, 0.0, 0.0, 0.7;
  CHECK(hard.value().isApprox(expected));
  CHECK((st.value() - expected).cwiseAbs().maxCoeff() < 1e-15);
  const Gradients gh = tape.backward(sum(hard));
  CHECK(gh[s].isApprox((Matrix(1, 4) << 1, 0, 0, 1).finished()));
  Tape t2;
  const Tensor s2 = t2.leaf(sv);
  const Gradients gs = t2.backward(sum(st_threshold(s2, t2.constant(0.3), t2.constant(0.1))));
  CHECK(gs[s2].isApprox(Matrix::Ones(1, 4)));
}

TEST_CASE("tensor KL ops agree with the scalar forms") {
  Tape tape;
  const Matrix mu = random_matrix(3, 2, 5, 0.5), ls = random_matrix(3, 2, 6, 0.5);
  const Tensor tm = tape.leaf(mu), tl = tape.leaf(ls);
  const Matrix kg = kl_gaussian(GaussianParams{tm, tl}, 0.3).value();
  const Matrix kl = kl_laplacian(LaplacianParams{tm, tl}, 0.1).value();
  const Matrix kgam = kl_gamma(GammaParams{tm, tl}, 3.0, 12.0).value();
  for (Index i = 0; i < mu.size(); ++i) {
    CHECK(kg(i) == doctest::Approx(kl_gaussian(mu(i), std::exp(0.5 * ls(i)), 0.3)));
    CHECK(kl(i) == doctest::Approx(kl_laplacian(mu(i), std::exp(ls(i)), 0.1)));
    CHECK(kgam(i) == doctest::Approx(kl_gamma(std::exp(mu(i)), std::exp(ls(i)), 3.0, 12.0)));
  }
}

TEST_CASE("distribution ops pass finite differences") {
  const std::vector<Matrix> in = {random_matrix(3, 4, 7, 0.5), random_matrix(3, 4, 8, 0.3)};
  Rng rng = make_stream(9, 9);
  const Matrix eps_u = uniform_open(3, 4, -0.5, 0.5, rng);
  const Matrix eps_n = standard_normal(3, 4, rng);
  const Matrix eps_l = logistic_noise(3, 4, rng);
  const Matrix gu = uniform_open(3, 4, 0.0, 1.0, rng);
  std::vector<Probe> probes;
  for (std::size_t k = 0; k < 2; ++k)
    for (Index i = 0; i < 12; ++i) probes.push_back({k, i});
  const std::vector<std::pair<const char*, MultiFn>> fns = {
      {"sample_gaussian", [&](Tape&, std::span<const Tensor> t) { return sum(square(sample_gaussian({t[0], t[1]}, eps_n))); }},
      {"kl_gaussian", [&](Tape&, std::span<const Tensor> t) { return sum(kl_gaussian(GaussianParams{t[0], t[1]}, 0.3)); }},
      {"sample_laplacian", [&](Tape&, std::span<const Tensor> t) { return sum(square(sample_laplacian({t[0], t[1]}, eps_u))); }},
      {"kl_laplacian", [&](Tape&, std::span<const Tensor> t) { return sum(kl_laplacian(LaplacianParams{t[0], t[1]}, 0.1)); }},
      {"gamma_from_uniform", [&](Tape&, std::span<const Tensor> t) { return sum(gamma_from_uniform({t[0], t[1]}, gu)); }},
      {"kl_gamma", [&](Tape&, std::span<const Tensor> t) { return sum(kl_gamma(GammaParams{t[0], t[1]}, 3.0, 12.0)); }},
      {"sample_spike_slab", [&](Tape&, std::span<const Tensor> t) {
         return sum(square(sample_spike_slab({t[0], {t[1], t[0]}, 0.7}, eps_l, eps_n)));
       }},
      {"kl_spike_slab", [&](Tape&, std::span<const Tensor> t) {
         return sum(kl_spike_slab({t[0], {t[1], t[0]}, 1.0}, 0.1, 0.3));
       }},
      {"shifted_soft_threshold", [&](Tape& tape, std::span<const Tensor> t) {
         return sum(square(shifted_soft_threshold(t[0], tape.constant(0.2), t[1])));
       }},
  };
  for (const auto& [name, f] : fns) {
    CAPTURE(name);
    CHECK(grad_check(f, in, 1e-6, probes).max_rel_error < 1e-5);
  }
}

}
