// SPDX-License-Identifier: Apache-2.0

#include "vsc/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace vsc {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::constant: return "constant";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::div: return "div";
    case OpKind::neg: return "neg";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::abs: return "abs";
    case OpKind::sign: return "sign";
    case OpKind::max_scalar: return "max_scalar";
    case OpKind::relu: return "relu";
    case OpKind::square: return "square";
    case OpKind::clamp: return "clamp";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::softplus: return "softplus";
    case OpKind::scale: return "scale";
    case OpKind::linear: return "linear";
    case OpKind::add_bias: return "add_bias";
    case OpKind::sum: return "sum";
    case OpKind::col_sum: return "col_sum";
    case OpKind::stop_gradient: return "stop_gradient";
    case OpKind::select_max: return "select_max";
    case OpKind::custom: return "custom";
  }
  return "unknown";
}

const Matrix& Tensor::value() const { return tape_->value(id_); }

double Tensor::item() const {
  if (size() != 1) {
    throw ShapeError("item() on a tensor with " + std::to_string(size()) + " entries");
  }
  return value()(0, 0);
}

bool Tensor::requires_grad() const { return tape_->requires_grad(id_); }

Matrix Gradients::operator[](const Tensor& t) const {
  if (t.id() < grads_.size() && grads_[t.id()].size() != 0) return grads_[t.id()];
  return Matrix::Zero(t.rows(), t.cols());
}

Tensor Tape::leaf(Matrix value) {
  if (check_finite_ && !value.allFinite()) throw NumericalError("non-finite value in leaf");
  nodes_.push_back({OpKind::leaf, "leaf", std::move(value), {}, {}, true});
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::constant(Matrix value) {
  nodes_.push_back({OpKind::constant, "constant", std::move(value), {}, {}, false});
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

Tensor Tape::record(OpKind kind, std::string_view name, Matrix value,
                    std::initializer_list<Tensor> parents, BackwardFn backward) {
  return record(kind, name, std::move(value), std::span<const Tensor>(parents.begin(), parents.size()),
                std::move(backward));
}

Tensor Tape::record(OpKind kind, std::string_view name, Matrix value, std::span<const Tensor> parents,
                    BackwardFn backward) {
  if (check_finite_ && !value.allFinite()) {
    throw NumericalError("non-finite output from op '" + std::string(name) + "'");
  }
  Node node{kind, std::string(name), std::move(value), {}, {}, false};
  node.parents.reserve(parents.size());
  for (const auto& p : parents) {
    if (&p.tape() != this) throw std::logic_error("tensor from a different tape passed to " + node.name);
    node.parents.push_back(p.id());
    node.requires_grad = node.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Tensor(this, nodes_.size() - 1);
}

Gradients Tape::backward(const Tensor& loss) {
  if (&loss.tape() != this) throw std::logic_error("backward: loss lives on another tape");
  if (loss.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + std::to_string(loss.rows()) + "x" +
                     std::to_string(loss.cols()));
  }
  std::vector<Matrix> grads(nodes_.size());
  grads[loss.id()] = Matrix::Ones(1, 1);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || grads[i].size() == 0 || node.parents.empty()) continue;
    for (std::size_t k = 0; k < node.parents.size(); ++k) {
      const std::size_t p = node.parents[k];
      if (!nodes_[p].requires_grad) continue;
      Matrix contrib = node.backward(grads[i], k);
      if (check_finite_ && !contrib.allFinite()) {
        throw NumericalError("NaN/Inf gradient produced by op '" + node.name + "'");
      }
      if (grads[p].size() == 0) {
        grads[p] = std::move(contrib);
      } else {
        grads[p] += contrib;
      }
    }
    if (node.kind != OpKind::leaf) grads[i].resize(0, 0);
  }
  return Gradients(std::move(grads));
}

void Tape::replay_decisions(FrozenDecisions frozen) {
  frozen_ = std::move(frozen);
  mode_ = Mode::replay;
  stop_cursor_ = 0;
  select_cursor_ = 0;
}

const Matrix* Tape::next_frozen_stop() {
  if (stop_cursor_ >= frozen_.stopped.size()) throw std::logic_error("replay: stop_gradient count mismatch");
  return &frozen_.stopped[stop_cursor_++];
}

const std::vector<Index>* Tape::next_frozen_selection() {
  if (select_cursor_ >= frozen_.selections.size()) throw std::logic_error("replay: select_max count mismatch");
  return &frozen_.selections[select_cursor_++];
}

namespace {

bool same_shape(const Matrix& a, const Matrix& b) { return a.rows() == b.rows() && a.cols() == b.cols(); }

void check_binary(const Tensor& a, const Tensor& b, std::string_view op) {
  if (&a.tape() != &b.tape()) throw std::logic_error("operands on different tapes");
  if (!same_shape(a.value(), b.value()) && a.size() != 1 && b.size() != 1) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

// Expand a 1x1 operand to the output shape.
Matrix expand(const Matrix& m, Index rows, Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  return Matrix::Constant(rows, cols, m(0, 0));
}

// Sum an adjoint down to a 1x1 parent if the parent was broadcast.
Matrix reduce_like(Matrix g, const Matrix& parent) {
  if (parent.size() == 1 && g.size() != 1) return Matrix::Constant(1, 1, g.sum());
  return g;
}

std::pair<Index, Index> out_shape(const Tensor& a, const Tensor& b) {
  if (a.size() == 1 && b.size() != 1) return {b.rows(), b.cols()};
  return {a.rows(), a.cols()};
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_binary(a, b, "add");
  auto [r, c] = out_shape(a, b);
  Matrix v = expand(a.value(), r, c) + expand(b.value(), r, c);
  Tape* t = &a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t->record(OpKind::add, "add", std::move(v), {a, b}, [t, ia, ib](const Matrix& g, std::size_t k) {
    return reduce_like(g, t->value(k == 0 ? ia : ib));
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_binary(a, b, "sub");
  auto [r, c] = out_shape(a, b);
  Matrix v = expand(a.value(), r, c) - expand(b.value(), r, c);
  Tape* t = &a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t->record(OpKind::sub, "sub", std::move(v), {a, b}, [t, ia, ib](const Matrix& g, std::size_t k) {
    return k == 0 ? reduce_like(g, t->value(ia)) : reduce_like(-g, t->value(ib));
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_binary(a, b, "mul");
  auto [r, c] = out_shape(a, b);
  Matrix v = (expand(a.value(), r, c).array() * expand(b.value(), r, c).array()).matrix();
  Tape* t = &a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t->record(OpKind::mul, "mul", std::move(v), {a, b}, [t, ia, ib, r, c](const Matrix& g, std::size_t k) {
    const Matrix& self = t->value(k == 0 ? ia : ib);
    const Matrix& other = t->value(k == 0 ? ib : ia);
    Matrix local = (g.array() * expand(other, r, c).array()).matrix();
    return reduce_like(std::move(local), self);
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  check_binary(a, b, "div");
  auto [r, c] = out_shape(a, b);
  Matrix v = (expand(a.value(), r, c).array() / expand(b.value(), r, c).array()).matrix();
  Tape* t = &a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t->record(OpKind::div, "div", std::move(v), {a, b}, [t, ia, ib, r, c](const Matrix& g, std::size_t k) {
    const Matrix ea = expand(t->value(ia), r, c);
    const Matrix eb = expand(t->value(ib), r, c);
    if (k == 0) return reduce_like((g.array() / eb.array()).matrix(), t->value(ia));
    return reduce_like((-g.array() * ea.array() / eb.array().square()).matrix(), t->value(ib));
  });
}

namespace {

// Unary op whose local derivative is computed from the input value.
template <class Forward, class Local>
Tensor unary(OpKind kind, const Tensor& x, Forward forward, Local local) {
  Tape* t = &x.tape();
  const std::size_t ix = x.id();
  Matrix v = x.value().unaryExpr(forward);
  return t->record(kind, op_name(kind), std::move(v), {x}, [t, ix, local](const Matrix& g, std::size_t) {
    return Matrix((g.array() * t->value(ix).unaryExpr(local).array()).matrix());
  });
}

}  // namespace

Tensor neg(const Tensor& x) {
  return unary(OpKind::neg, x, [](double v) { return -v; }, [](double) { return -1.0; });
}

Tensor exp(const Tensor& x) {
  return unary(OpKind::exp, x, [](double v) { return std::exp(v); }, [](double v) { return std::exp(v); });
}

Tensor log(const Tensor& x) {
  return unary(OpKind::log, x, [](double v) { return std::log(v); }, [](double v) { return 1.0 / v; });
}

Tensor abs(const Tensor& x) {
  return unary(
      OpKind::abs, x, [](double v) { return std::abs(v); },
      [](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor sign(const Tensor& x) {
  return unary(
      OpKind::sign, x, [](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }, [](double) { return 0.0; });
}

Tensor max_scalar(const Tensor& x, double floor) {
  return unary(
      OpKind::max_scalar, x, [floor](double v) { return std::max(v, floor); },
      [floor](double v) { return v > floor ? 1.0 : 0.0; });
}

Tensor relu(const Tensor& x) {
  return unary(
      OpKind::relu, x, [](double v) { return v > 0 ? v : 0.0; }, [](double v) { return v > 0 ? 1.0 : 0.0; });
}

Tensor square(const Tensor& x) {
  return unary(OpKind::square, x, [](double v) { return v * v; }, [](double v) { return 2.0 * v; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary(
      OpKind::clamp, x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      OpKind::sigmoid, x, [](double v) { return stable_sigmoid(v); },
      [](double v) {
        const double s = stable_sigmoid(v);
        return s * (1.0 - s);
      });
}

Tensor softplus(const Tensor& x) {
  return unary(
      OpKind::softplus, x, [](double v) { return stable_softplus(v); }, [](double v) { return stable_sigmoid(v); });
}

Tensor scale(const Tensor& x, double factor) {
  Tape* t = &x.tape();
  return t->record(OpKind::scale, "scale", x.value() * factor, {x},
                   [factor](const Matrix& g, std::size_t) { return Matrix(g * factor); });
}

Tensor add_scalar(const Tensor& x, double shift) {
  Tape* t = &x.tape();
  Matrix v = (x.value().array() + shift).matrix();
  return t->record(OpKind::add, "add_scalar", std::move(v), {x}, [](const Matrix& g, std::size_t) { return g; });
}

Tensor linear(const Tensor& a, const Tensor& x) {
  if (&a.tape() != &x.tape()) throw std::logic_error("linear: operands on different tapes");
  if (a.cols() != x.rows()) {
    throw ShapeError("linear: inner dimensions disagree (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " times " + std::to_string(x.rows()) + "x" +
                     std::to_string(x.cols()) + ")");
  }
  Tape* t = &a.tape();
  const std::size_t ia = a.id(), ix = x.id();
  Matrix v = a.value() * x.value();
  return t->record(OpKind::linear, "linear", std::move(v), {a, x}, [t, ia, ix](const Matrix& g, std::size_t k) {
    if (k == 0) return Matrix(g * t->value(ix).transpose());
    return Matrix(t->value(ia).transpose() * g);
  });
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
  if (b.cols() != 1 || b.rows() != x.rows()) {
    throw ShapeError("add_bias: bias must be " + std::to_string(x.rows()) + "x1");
  }
  Tape* t = &x.tape();
  Matrix v = x.value().colwise() + b.value().col(0);
  return t->record(OpKind::add_bias, "add_bias", std::move(v), {x, b}, [](const Matrix& g, std::size_t k) {
    if (k == 0) return g;
    return Matrix(g.rowwise().sum());
  });
}

Tensor sum(const Tensor& x) {
  Tape* t = &x.tape();
  const Index r = x.rows(), c = x.cols();
  return t->record(OpKind::sum, "sum", Matrix::Constant(1, 1, x.value().sum()), {x},
                   [r, c](const Matrix& g, std::size_t) { return Matrix(Matrix::Constant(r, c, g(0, 0))); });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor col_sum(const Tensor& x) {
  Tape* t = &x.tape();
  const Index r = x.rows();
  return t->record(OpKind::col_sum, "col_sum", x.value().colwise().sum(), {x},
                   [r](const Matrix& g, std::size_t) { return Matrix(g.replicate(r, 1)); });
}

Tensor stop_gradient(const Tensor& x) {
  Tape* t = &x.tape();
  Matrix v;
  if (t->replaying()) {
    const Matrix* frozen = t->next_frozen_stop();
    if (!same_shape(*frozen, x.value())) throw std::logic_error("replay: stop_gradient shape changed");
    v = *frozen;
  } else {
    v = x.value();
    if (t->recording()) t->push_stop(v);
  }
  return t->record(OpKind::stop_gradient, "stop_gradient", std::move(v), std::span<const Tensor>{}, {});
}

Selection select_max(std::span<const Tensor> candidates) {
  if (candidates.empty()) throw std::invalid_argument("select_max: no candidates");
  Tape* t = &candidates.front().tape();
  const Index n = candidates.front().cols();
  for (const auto& c : candidates) {
    if (c.rows() != 1 || c.cols() != n) throw ShapeError("select_max: candidates must all be 1 x n");
  }
  std::vector<Index> index(static_cast<std::size_t>(n), 0);
  if (t->replaying()) {
    index = *t->next_frozen_selection();
  } else {
    for (Index col = 0; col < n; ++col) {
      double best = candidates[0].value()(0, col);
      for (std::size_t j = 1; j < candidates.size(); ++j) {
        const double v = candidates[j].value()(0, col);
        if (v > best) {
          best = v;
          index[col] = static_cast<Index>(j);
        }
      }
    }
    if (t->recording()) t->push_selection(index);
  }
  Matrix v(1, n);
  for (Index col = 0; col < n; ++col) v(0, col) = candidates[index[col]].value()(0, col);
  Tensor out = t->record(OpKind::select_max, "select_max", std::move(v), candidates,
                         [index](const Matrix& g, std::size_t k) {
                           Matrix local = Matrix::Zero(1, g.cols());
                           for (Index col = 0; col < g.cols(); ++col) {
                             if (index[col] == static_cast<Index>(k)) local(0, col) = g(0, col);
                           }
                           return local;
                         });
  return {out, std::move(index)};
}

Tensor elementwise_custom(std::string_view name, Matrix value, std::span<const Tensor> parents,
                          std::vector<Matrix> local_grads) {
  if (parents.empty()) throw std::invalid_argument("elementwise_custom: needs at least one parent");
  if (local_grads.size() != parents.size()) throw std::invalid_argument("elementwise_custom: one local grad per parent");
  for (const auto& lg : local_grads) {
    if (!same_shape(lg, value)) throw ShapeError(std::string(name) + ": local gradient shape mismatch");
  }
  for (const auto& p : parents) {
    if (!same_shape(p.value(), value) && p.size() != 1) throw ShapeError(std::string(name) + ": parent shape mismatch");
  }
  Tape* t = &parents.front().tape();
  std::vector<std::size_t> ids;
  for (const auto& p : parents) ids.push_back(p.id());
  return t->record(OpKind::custom, name, std::move(value), parents,
                   [t, ids, locals = std::move(local_grads)](const Matrix& g, std::size_t k) {
                     return reduce_like((g.array() * locals[k].array()).matrix(), t->value(ids[k]));
                   });
}

GradCheckResult grad_check(const MultiFn& f, std::span<const Matrix> inputs, double h,
                           std::span<const Probe> probes, bool freeze) {
  FrozenDecisions frozen;
  Gradients grads;
  std::vector<Matrix> analytic_grads;
  {
    Tape tape;
    if (freeze) tape.start_recording_decisions();
    std::vector<Tensor> leaves;
    for (const auto& in : inputs) leaves.push_back(tape.leaf(in));
    Tensor loss = f(tape, leaves);
    if (freeze) frozen = tape.take_decisions();
    grads = tape.backward(loss);
    for (const auto& l : leaves) analytic_grads.push_back(grads[l]);
  }

  std::vector<Matrix> xs(inputs.begin(), inputs.end());
  auto evaluate = [&]() {
    Tape tape;
    if (freeze) tape.replay_decisions(frozen);
    std::vector<Tensor> leaves;
    for (const auto& x : xs) leaves.push_back(tape.leaf(x));
    const double v = f(tape, leaves).item();
    if (!std::isfinite(v)) throw NumericalError("grad_check: function non-finite at probe point");
    return v;
  };

  GradCheckResult result;
  for (const auto& probe : probes) {
    Matrix& x = xs.at(probe.input);
    const double x0 = x(probe.coord);
    const double step = h * std::max(1.0, std::abs(x0));
    x(probe.coord) = x0 + step;
    const double fp = evaluate();
    x(probe.coord) = x0 - step;
    const double fm = evaluate();
    x(probe.coord) = x0;
    const double numeric = (fp - fm) / (2.0 * step);
    const double analytic = analytic_grads[probe.input](probe.coord);
    const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
    if (err > result.max_rel_error || result.probes == 0) {
      result.max_rel_error = err;
      result.worst_input = probe.input;
      result.worst_coord = probe.coord;
    }
    ++result.probes;
  }
  return result;
}

GradCheckResult grad_check(const ScalarFn& f, const Matrix& x0, double h, bool freeze) {
  std::vector<Probe> probes;
  for (Index i = 0; i < x0.size(); ++i) probes.push_back({0, i});
  MultiFn wrapped = [&f](Tape& t, std::span<const Tensor> xs) { return f(t, xs[0]); };
  return grad_check(wrapped, std::span<const Matrix>(&x0, 1), h, probes, freeze);
}

}  // namespace vsc
