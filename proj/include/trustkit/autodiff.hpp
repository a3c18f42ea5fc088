#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "trustkit/tensor.hpp"

namespace trustkit {

class Tape;

/// Handle to a value recorded on a Tape.
///
/// A Var is a (tape, index) pair; it is cheap to copy and stays valid for the
/// lifetime of its tape. Values on a tape are always matrices.
class Var {
 public:
  static constexpr std::uint32_t kInvalid = 0xFFFFFFFFu;

  Var() = default;

  bool valid() const { return tape_ != nullptr && id_ != kInvalid; }
  Tape* tape() const { return tape_; }
  std::uint32_t id() const { return id_; }

  const Tensor& value() const;
  bool requires_grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  double item() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = kInvalid;
};

/// Backward rule of a node with up to two parents. Receives the upstream
/// gradient and the node's own output, returns one gradient per parent; entries
/// whose `need` flag is false may be left invalid. Rules are written in terms
/// of differentiable ops, so gradients can themselves be differentiated.
using BackwardFn =
    std::function<std::array<Var, 2>(const Var& grad_out, const Var& out, std::array<bool, 2> need)>;

struct GradOptions {
  /// Record the backward pass so the returned gradients are differentiable
  /// (needed for Hessian-vector products and gradient-based penalties).
  bool create_graph = false;
  /// Upstream gradient for non-scalar outputs; defaults to ones.
  std::optional<Tensor> seed;
};

/// Linear record of operations for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, which is a topological order, so a
/// backward sweep simply walks indices downward from the output. The tape is
/// never consumed: gradients may be requested repeatedly, and backward passes
/// recorded with `create_graph` append new nodes that can be differentiated
/// again. A tape and its Vars belong to one thread at a time.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that gradients can be taken with respect to.
  Var variable(Tensor value);
  Var constant(Tensor value);

  /// Gradients of `output` w.r.t. each entry of `wrt` (zeros when unreachable).
  std::vector<Var> gradients(const Var& output, std::span<const Var> wrt, const GradOptions& options = {});
  Var gradient(const Var& output, const Var& wrt, const GradOptions& options = {});

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  const Tensor& value(const Var& v) const;
  bool requires_grad(const Var& v) const;

  /// Appends an op result. Parents that do not require grad are not tracked.
  Var push(Tensor value, std::initializer_list<Var> parents, BackwardFn backward);

  /// Disables recording within a scope; results become constants.
  class NoGradGuard {
   public:
    explicit NoGradGuard(Tape& tape) : tape_(tape), previous_(tape.recording_) { tape.recording_ = false; }
    ~NoGradGuard() { tape_.recording_ = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

   private:
    Tape& tape_;
    bool previous_;
  };

 private:
  struct Node {
    Tensor value;
    bool requires_grad = false;
    std::array<std::uint32_t, 2> parents{Var::kInvalid, Var::kInvalid};
    BackwardFn backward;
  };

  void check_owned(const Var& v, const char* what) const;

  std::deque<Node> nodes_;
  bool recording_ = true;
};

// Differentiable operations. Binary elementwise ops broadcast matrix
// dimensions of size one (row vectors, column vectors, scalars).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double c);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var relu(const Var& a);
Var square(const Var& a);
/// max(a, lo); gradient flows where a > lo.
Var clamp_min(const Var& a, double lo);
/// Reduces broadcast dimensions so the result has the given shape.
Var sum_to(const Var& a, std::size_t rows, std::size_t cols);
Var broadcast_to(const Var& a, std::size_t rows, std::size_t cols);
Var sum(const Var& a);
Var mean(const Var& a);
/// Row sums as a column vector.
Var sum_rows(const Var& a);
Var log_softmax(const Var& a);
Var softmax(const Var& a);
/// Row-wise log-sum-exp as a column vector.
Var logsumexp_rows(const Var& a);
Var reshape(const Var& a, std::size_t rows, std::size_t cols);
Var slice_cols(const Var& a, std::size_t begin, std::size_t end);
/// Places `a` into a zero matrix with `total` columns starting at `begin`.
Var pad_cols(const Var& a, std::size_t begin, std::size_t total);
/// Flat range [offset, offset + rows*cols) of `a`, reshaped.
Var slice_range(const Var& a, std::size_t offset, std::size_t rows, std::size_t cols);
/// Adjoint of slice_range: zeros of shape (rows, cols) with `a` written flat at `offset`.
Var embed_range(const Var& a, std::size_t offset, std::size_t rows, std::size_t cols);
Var dot(const Var& a, const Var& b);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }
inline Var operator+(const Var& a, double c) { return add_scalar(a, c); }
inline Var operator-(const Var& a, double c) { return add_scalar(a, -c); }

/// Gradient value as a flat vector.
std::vector<double> gradient_values(const Var& output, const Var& wrt);

}  // namespace trustkit
