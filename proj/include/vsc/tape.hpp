// SPDX-License-Identifier: Apache-2.0
//
// Define-by-run reverse-mode differentiation over dense Eigen matrices.
//
// A Tape owns an append-only list of nodes. Every forward op appends one node
// holding its value, its parent handles and a closure that maps the incoming
// adjoint onto each parent. backward() walks the nodes in strict reverse
// append order, so the graph is acyclic by construction and the accumulation
// order (and therefore the result) is fixed.
//
// Layout convention: batched quantities are stored feature-major, one column
// per datum (features x batch). Scalars are 1x1 matrices.

#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vsc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Raised when a forward value or a gradient becomes NaN/Inf. The message
/// names the op that produced it.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class OpKind {
  leaf,
  constant,
  add,
  sub,
  mul,
  div,
  neg,
  exp,
  log,
  abs,
  sign,
  max_scalar,
  relu,
  square,
  clamp,
  sigmoid,
  softplus,
  scale,
  linear,
  add_bias,
  sum,
  col_sum,
  stop_gradient,
  select_max,
  custom,
};

std::string_view op_name(OpKind kind);

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the
/// owning tape is alive.
class Tensor {
 public:
  Tensor() = default;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Index size() const { return value().size(); }
  bool is_scalar() const { return size() == 1; }
  double item() const;
  bool requires_grad() const;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Result of Tape::backward: adjoints of every node that required a gradient.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::vector<Matrix> grads) : grads_(std::move(grads)) {}

  /// Gradient for `t`. Leaves that did not influence the loss get zeros of the
  /// right shape.
  Matrix operator[](const Tensor& t) const;

 private:
  std::vector<Matrix> grads_;
};

/// Values captured from discrete or gradient-blocked decisions during a
/// recording pass. Replaying them lets a finite-difference probe evaluate the
/// surrogate function that reverse mode actually differentiates.
struct FrozenDecisions {
  std::vector<Matrix> stopped;
  std::vector<std::vector<Index>> selections;
};

class Tape {
 public:
  /// Local adjoint rule: given the output adjoint, return the contribution to
  /// parent number `parent`. Only called for parents that need gradients.
  using BackwardFn = std::function<Matrix(const Matrix& grad_out, std::size_t parent)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor leaf(Matrix value);
  Tensor constant(Matrix value);
  Tensor constant(double value);

  /// Appends a node. Parents must live on this tape.
  Tensor record(OpKind kind, std::string_view name, Matrix value,
                std::initializer_list<Tensor> parents, BackwardFn backward);
  Tensor record(OpKind kind, std::string_view name, Matrix value,
                std::span<const Tensor> parents, BackwardFn backward);

  Gradients backward(const Tensor& loss);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  void set_check_finite(bool on) { check_finite_ = on; }
  bool check_finite() const { return check_finite_; }

  // Freezing support for stop_gradient and select_max.
  void start_recording_decisions() { mode_ = Mode::record; frozen_ = {}; }
  void replay_decisions(FrozenDecisions frozen);
  FrozenDecisions take_decisions() { mode_ = Mode::normal; return std::move(frozen_); }
  bool replaying() const { return mode_ == Mode::replay; }
  bool recording() const { return mode_ == Mode::record; }
  const Matrix* next_frozen_stop();
  const std::vector<Index>* next_frozen_selection();
  void push_stop(const Matrix& m) { frozen_.stopped.push_back(m); }
  void push_selection(const std::vector<Index>& s) { frozen_.selections.push_back(s); }

 private:
  struct Node {
    OpKind kind;
    std::string name;
    Matrix value;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad;
  };

  enum class Mode { normal, record, replay };

  std::vector<Node> nodes_;
  bool check_finite_ = true;
  Mode mode_ = Mode::normal;
  FrozenDecisions frozen_;
  std::size_t stop_cursor_ = 0;
  std::size_t select_cursor_ = 0;
};

// ---------------------------------------------------------------------------
// Elementwise ops. Binary ops accept identical shapes or one 1x1 operand.
// Subgradient convention: abs, sign, relu and max_scalar use 0 at the kink.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor sign(const Tensor& x);
Tensor max_scalar(const Tensor& x, double floor);
Tensor relu(const Tensor& x);
Tensor square(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double shift);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& x) { return neg(x); }
inline Tensor operator*(const Tensor& x, double f) { return scale(x, f); }
inline Tensor operator*(double f, const Tensor& x) { return scale(x, f); }
inline Tensor operator+(const Tensor& x, double s) { return add_scalar(x, s); }
inline Tensor operator-(const Tensor& x, double s) { return add_scalar(x, -s); }

/// Matrix product A * x. grad_A = g x^T, grad_x = A^T g.
Tensor linear(const Tensor& a, const Tensor& x);
/// Adds column vector b (m x 1) to every column of x (m x n).
Tensor add_bias(const Tensor& x, const Tensor& b);
/// Sum of all entries (1x1).
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Per-column sums: (m x n) -> (1 x n).
Tensor col_sum(const Tensor& x);

/// Identity forward, zero backward.
Tensor stop_gradient(const Tensor& x);

/// Columnwise argmax across candidates of identical shape (1 x n each). Ties
/// go to the lowest candidate index. The adjoint reaches only the selected
/// candidate of each column.
struct Selection {
  Tensor value;
  std::vector<Index> index;
};
Selection select_max(std::span<const Tensor> candidates);

/// Elementwise op with caller-supplied forward value and local partials
/// (one matrix per parent, same shape as the output). Parents with a 1x1
/// value receive the summed contribution.
Tensor elementwise_custom(std::string_view name, Matrix value, std::span<const Tensor> parents,
                          std::vector<Matrix> local_grads);

// ---------------------------------------------------------------------------
// Finite-difference checking.

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  Index worst_coord = 0;
  std::size_t probes = 0;
};

struct Probe {
  std::size_t input;
  Index coord;
};

using MultiFn = std::function<Tensor(Tape&, std::span<const Tensor>)>;
using ScalarFn = std::function<Tensor(Tape&, const Tensor&)>;

/// Compares reverse-mode gradients with central differences
/// (step h * max(1, |x_i|)) at the requested coordinates. The error per
/// coordinate is |analytic - numeric| / max(1, |numeric|).
///
/// With `freeze` set, stop_gradient values and select_max decisions from the
/// base evaluation are replayed at the probe points, so the numeric side
/// differentiates the same surrogate as the tape. Without it, a blocked path
/// shows up as a reported mismatch.
GradCheckResult grad_check(const MultiFn& f, std::span<const Matrix> inputs, double h,
                           std::span<const Probe> probes, bool freeze = true);
GradCheckResult grad_check(const ScalarFn& f, const Matrix& x0, double h, bool freeze = false);

}  // namespace vsc
