// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include <doctest.h>

using namespace vsc;
using vsc::testing::random_matrix;

TEST_SUITE("tape") {

TEST_CASE("elementwise ops match central differences") {
  const Matrix x = random_matrix(3, 4, 1);
  const Matrix pos = x.cwiseAbs().array() + 0.5;
  const double h = 1e-6;
  struct Case {
    const char* name;
    ScalarFn f;
    Matrix at;
  };
  const std::vector<Case> cases = {
      {"neg", [](Tape&, const Tensor& t) { return sum(neg(t)); }, x},
      {"exp", [](Tape&, const Tensor& t) { return sum(exp(t)); }, x},
      {"log", [](Tape&, const Tensor& t) { return sum(log(t)); }, pos},
      {"abs", [](Tape&, const Tensor& t) { return sum(abs(t) * t); }, x},
      {"sign", [](Tape&, const Tensor& t) { return sum(sign(t) * t); }, x},
      {"max_scalar", [](Tape&, const Tensor& t) { return sum(square(max_scalar(t, 0.1))); }, x},
      {"relu", [](Tape&, const Tensor& t) { return sum(square(relu(t))); }, x},
      {"square", [](Tape&, const Tensor& t) { return sum(square(t)); }, x},
      {"clamp", [](Tape&, const Tensor& t) { return sum(square(clamp(t, -0.5, 0.5))); }, x},
      {"sigmoid", [](Tape&, const Tensor& t) { return sum(sigmoid(t)); }, x},
      {"softplus", [](Tape&, const Tensor& t) { return sum(softplus(t)); }, x},
      {"scale", [](Tape&, const Tensor& t) { return sum(square(t * 3.0)); }, x},
      {"add_scalar", [](Tape&, const Tensor& t) { return sum(square(t + 2.0)); }, x},
      {"mul", [](Tape&, const Tensor& t) { return sum(t * t * t); }, x},
      {"div", [](Tape&, const Tensor& t) { return sum(t / (square(t) + 1.0)); }, x},
      {"sub", [](Tape& tape, const Tensor& t) { return sum(square(t - tape.constant(0.3))); }, x},
      {"mean", [](Tape&, const Tensor& t) { return mean(square(t)); }, x},
      {"col_sum", [](Tape&, const Tensor& t) { return sum(square(col_sum(t))); }, x},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    const GradCheckResult r = grad_check(c.f, c.at, h);
    CHECK(r.probes == static_cast<std::size_t>(c.at.size()));
    CHECK(r.max_rel_error < 1e-5);
  }
}

TEST_CASE("linear and add_bias gradients") {
  const std::vector<Matrix> inputs = {random_matrix(3, 5, 2), random_matrix(5, 4, 3), random_matrix(3, 1, 4)};
  MultiFn f = [](Tape&, std::span<const Tensor> t) { return sum(square(add_bias(linear(t[0], t[1]), t[2]))); };
  std::vector<Probe> probes;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (Index i = 0; i < inputs[k].size(); ++i) probes.push_back({k, i});
  }
  CHECK(grad_check(f, inputs, 1e-6, probes).max_rel_error < 1e-5);
}

TEST_CASE("scalar operands broadcast and receive summed adjoints") {
  Tape tape;
  const Tensor a = tape.leaf(Matrix::Constant(1, 1, 2.0));
  const Tensor b = tape.leaf(random_matrix(2, 3, 5));
  const Gradients g = tape.backward(sum(a * b));
  CHECK(g[a](0, 0) == doctest::Approx(b.value().sum()));
  CHECK(g[b].isApprox(Matrix::Constant(2, 3, 2.0)));
}

TEST_CASE("mismatched shapes raise ShapeError") {
  Tape tape;
  const Tensor a = tape.leaf(Matrix::Zero(2, 3));
  const Tensor b = tape.leaf(Matrix::Zero(3, 2));
  CHECK_THROWS_AS(add(a, b), ShapeError);
  CHECK_THROWS_AS(linear(a, a), ShapeError);
}

TEST_CASE("stop_gradient blocks the adjoint") {
  Tape tape;
  const Tensor x = tape.leaf(random_matrix(2, 2, 6));
  const Gradients g = tape.backward(sum(square(stop_gradient(x)) + x));
  CHECK(g[x].isApprox(Matrix::Ones(2, 2)));
}

TEST_CASE("unused leaves get zero gradients of their shape") {
  Tape tape;
  const Tensor x = tape.leaf(random_matrix(2, 2, 7));
  const Tensor y = tape.leaf(random_matrix(4, 1, 8));
  const Gradients g = tape.backward(sum(x));
  CHECK(g[y].rows() == 4);
  CHECK(g[y].isZero());
}

TEST_CASE("select_max routes the adjoint to the chosen candidate") {
  Tape tape;
  Matrix a(1, 3), b(1, 3);
  a << 1.0, 5.0, 2.0;
  b << 3.0, 5.0, 1.0;
  const Tensor ta = tape.leaf(a), tb = tape.leaf(b);
  const std::vector<Tensor> cands = {ta, tb};
  const Selection sel = select_max(cands);
  CHECK(sel.index == std::vector<Index>{1, 0, 0});
  CHECK(sel.value.value().isApprox((Matrix(1, 3) << 3.0, 5.0, 2.0).finished()));
  const Gradients g = tape.backward(sum(sel.value));
  CHECK(g[ta].isApprox((Matrix(1, 3) << 0, 1, 1).finished()));
  CHECK(g[tb].isApprox((Matrix(1, 3) << 1, 0, 0).finished()));
}

TEST_CASE("non-finite values name the producing op") {
  Tape tape;
  const Tensor x = tape.leaf(Matrix::Constant(1, 1, -1.0));
  try {
    (void)log(x);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("log") != std::string::npos);
  }
  Tape lax;
  lax.set_check_finite(false);
  CHECK_NOTHROW((void)log(lax.leaf(Matrix::Constant(1, 1, -1.0))));
}

TEST_CASE("backward is deterministic") {
  const Matrix w = random_matrix(6, 6, 9), v = random_matrix(6, 10, 10);
  auto run = [&] {
    Tape tape;
    const Tensor tw = tape.leaf(w);
    const Tensor h = relu(linear(tw, tape.constant(v)));
    return Matrix(tape.backward(sum(softplus(h) * h))[tw]);
  };
  const Matrix g1 = run(), g2 = run();
  CHECK((g1.array() == g2.array()).all());
}

TEST_CASE("elementwise_custom applies the given partials") {
  Tape tape;
  const Tensor x = tape.leaf(random_matrix(2, 2, 11));
  const Tensor c = tape.leaf(Matrix::Constant(1, 1, 0.5));
  const Matrix value = x.value().array() * 0.5;
  const std::vector<Tensor> parents = {x, c};
  const Tensor y = elementwise_custom("half", value, parents, {Matrix::Constant(2, 2, 0.5), x.value()});
  const Gradients g = tape.backward(sum(y));
  CHECK(g[x].isApprox(Matrix::Constant(2, 2, 0.5)));
  CHECK(g[c](0, 0) == doctest::Approx(x.value().sum()));
}

TEST_CASE("frozen decisions make blocked paths checkable") {
  ScalarFn f = [](Tape&, const Tensor& t) { return sum(square(t) * stop_gradient(t)); };
  const Matrix x = random_matrix(2, 3, 12);
  CHECK(grad_check(f, x, 1e-6, true).max_rel_error < 1e-5);
  CHECK(grad_check(f, x, 1e-6, false).max_rel_error > 1e-2);
}

}
