#include "trustkit/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "trustkit/errors.hpp"

namespace trustkit {

// ---------------------------------------------------------------------------
// Var / Tape

const Tensor& Var::value() const {
  if (!valid()) throw TapeError("access through an invalid Var");
  return tape_->value(*this);
}

bool Var::requires_grad() const { return valid() && tape_->requires_grad(*this); }

double Var::item() const {
  const Tensor& v = value();
  if (v.size() != 1) throw ShapeError("item() on non-scalar node of shape " + v.shape_string());
  return v[0];
}

void Tape::check_owned(const Var& v, const char* what) const {
  if (!v.valid()) throw TapeError(std::string(what) + ": invalid Var");
  if (v.tape_ != this || v.id_ >= nodes_.size()) throw TapeError(std::string(what) + ": Var is not on this tape");
}

const Tensor& Tape::value(const Var& v) const {
  check_owned(v, "value");
  return nodes_[v.id_].value;
}

bool Tape::requires_grad(const Var& v) const {
  check_owned(v, "requires_grad");
  return nodes_[v.id_].requires_grad;
}

Var Tape::variable(Tensor value) {
  Node node;
  node.value = value.as_matrix();
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::constant(Tensor value) {
  Node node;
  node.value = value.as_matrix();
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::push(Tensor value, std::initializer_list<Var> parents, BackwardFn backward) {
  if (!value.all_finite()) throw NumericError("operation produced a non-finite value (shape " + value.shape_string() + ")");
  Node node;
  node.value = std::move(value);
  if (recording_) {
    std::size_t k = 0;
    for (const Var& p : parents) {
      check_owned(p, "push");
      if (nodes_[p.id_].requires_grad) {
        node.parents[k] = p.id_;
        node.requires_grad = true;
      }
      ++k;
    }
    if (node.requires_grad) node.backward = std::move(backward);
    else node.parents = {Var::kInvalid, Var::kInvalid};
  }
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

std::vector<Var> Tape::gradients(const Var& output, std::span<const Var> wrt, const GradOptions& options) {
  check_owned(output, "gradients(output)");
  for (const Var& w : wrt) check_owned(w, "gradients(wrt)");
  const Node& out_node = nodes_[output.id_];
  if (!out_node.requires_grad) throw TapeError("output is detached from every differentiable input");
  Tensor seed;
  if (options.seed) {
    seed = options.seed->as_matrix();
    if (seed.shape() != out_node.value.shape()) throw ShapeError("gradient seed shape mismatch");
  } else {
    if (out_node.value.size() != 1) throw TapeError("gradients of a non-scalar output need an explicit seed");
    seed = Tensor::scalar(1.0);
  }

  bool previous = recording_;
  recording_ = options.create_graph;
  std::vector<Var> acc(output.id_ + 1);
  acc[output.id_] = constant(std::move(seed));
  try {
    for (std::int64_t i = output.id_; i >= 0; --i) {
      Var g = acc[static_cast<std::size_t>(i)];
      if (!g.valid()) continue;
      const Node& node = nodes_[static_cast<std::size_t>(i)];
      if (!node.backward) continue;
      std::array<bool, 2> need{node.parents[0] != Var::kInvalid, node.parents[1] != Var::kInvalid};
      std::array<Var, 2> parent_grads = node.backward(g, Var(this, static_cast<std::uint32_t>(i)), need);
      for (std::size_t k = 0; k < 2; ++k) {
        if (!need[k] || !parent_grads[k].valid()) continue;
        Var& slot = acc[node.parents[k]];
        slot = slot.valid() ? add(slot, parent_grads[k]) : parent_grads[k];
      }
    }
  } catch (...) {
    recording_ = previous;
    throw;
  }
  recording_ = previous;

  std::vector<Var> result;
  result.reserve(wrt.size());
  for (const Var& w : wrt) {
    if (w.id_ <= output.id_ && acc[w.id_].valid()) {
      result.push_back(acc[w.id_]);
    } else {
      const Tensor& v = nodes_[w.id_].value;
      result.push_back(constant(Tensor({v.rows(), v.cols()})));
    }
  }
  return result;
}

Var Tape::gradient(const Var& output, const Var& wrt, const GradOptions& options) {
  std::array<Var, 1> w{wrt};
  return gradients(output, w, options)[0];
}

std::vector<double> gradient_values(const Var& output, const Var& wrt) {
  if (!output.valid()) throw TapeError("gradient of an invalid Var");
  Var g = output.tape()->gradient(output, wrt);
  return g.value().data();
}

// ---------------------------------------------------------------------------
// Helpers

namespace {

Tape& same_tape(const Var& a, const Var& b) {
  if (!a.valid() || !b.valid()) throw TapeError("operation on an invalid Var");
  if (a.tape() != b.tape()) throw TapeError("operands live on different tapes");
  return *a.tape();
}

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw TapeError("operation on an invalid Var");
  return *a.tape();
}

struct Dims {
  std::size_t rows, cols;
};

Dims broadcast_dims(const Tensor& a, const Tensor& b, const char* op) {
  auto pick = [&](std::size_t x, std::size_t y) -> std::size_t {
    if (x == y || y == 1) return x;
    if (x == 1) return y;
    throw ShapeError(std::string(op) + ": cannot broadcast " + a.shape_string() + " with " + b.shape_string());
  };
  return {pick(a.rows(), b.rows()), pick(a.cols(), b.cols())};
}

template <typename F>
Tensor binary_map(const Tensor& a, const Tensor& b, const char* op, F f) {
  Dims d = broadcast_dims(a, b, op);
  Tensor out({d.rows, d.cols});
  const std::size_t ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  if (ar == br && ac == bc) {
    for (std::size_t k = 0; k < out.size(); ++k) po[k] = f(pa[k], pb[k]);
    return out;
  }
  for (std::size_t i = 0; i < d.rows; ++i) {
    const double* rowa = pa + (ar == 1 ? 0 : i) * ac;
    const double* rowb = pb + (br == 1 ? 0 : i) * bc;
    for (std::size_t j = 0; j < d.cols; ++j) po[i * d.cols + j] = f(rowa[ac == 1 ? 0 : j], rowb[bc == 1 ? 0 : j]);
  }
  return out;
}

template <typename F>
Tensor unary_map(const Tensor& a, F f) {
  Tensor out({a.rows(), a.cols()});
  const double* pa = a.data().data();
  double* po = out.data().data();
  for (std::size_t k = 0; k < a.size(); ++k) po[k] = f(pa[k]);
  return out;
}

Var reduce_like(const Var& g, const Tensor& like) { return sum_to(g, like.rows(), like.cols()); }

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise binary

Var add(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  Tensor v = binary_map(a.value(), b.value(), "add", [](double x, double y) { return x + y; });
  return t.push(std::move(v), {a, b}, [a, b](const Var& g, const Var&, std::array<bool, 2> need) {
    std::array<Var, 2> r;
    if (need[0]) r[0] = reduce_like(g, a.value());
    if (need[1]) r[1] = reduce_like(g, b.value());
    return r;
  });
}

Var sub(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  Tensor v = binary_map(a.value(), b.value(), "sub", [](double x, double y) { return x - y; });
  return t.push(std::move(v), {a, b}, [a, b](const Var& g, const Var&, std::array<bool, 2> need) {
    std::array<Var, 2> r;
    if (need[0]) r[0] = reduce_like(g, a.value());
    if (need[1]) r[1] = reduce_like(neg(g), b.value());
    return r;
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  Tensor v = binary_map(a.value(), b.value(), "mul", [](double x, double y) { return x * y; });
  return t.push(std::move(v), {a, b}, [a, b](const Var& g, const Var&, std::array<bool, 2> need) {
    std::array<Var, 2> r;
    if (need[0]) r[0] = reduce_like(mul(g, b), a.value());
    if (need[1]) r[1] = reduce_like(mul(g, a), b.value());
    return r;
  });
}

Var div(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  Tensor v = binary_map(a.value(), b.value(), "div", [](double x, double y) { return x / y; });
  return t.push(std::move(v), {a, b}, [a, b](const Var& g, const Var& out, std::array<bool, 2> need) {
    std::array<Var, 2> r;
    if (need[0]) r[0] = reduce_like(div(g, b), a.value());
    if (need[1]) r[1] = reduce_like(neg(div(mul(g, out), b)), b.value());
    return r;
  });
}

// ---------------------------------------------------------------------------
// Elementwise unary

Var neg(const Var& a) {
  Tape& t = tape_of(a);
  return t.push(unary_map(a.value(), [](double x) { return -x; }), {a},
                [](const Var& g, const Var&, std::array<bool, 2>) { return std::array<Var, 2>{neg(g), Var()}; });
}

Var scale(const Var& a, double factor) {
  Tape& t = tape_of(a);
  return t.push(unary_map(a.value(), [factor](double x) { return x * factor; }), {a},
                [factor](const Var& g, const Var&, std::array<bool, 2>) {
                  return std::array<Var, 2>{scale(g, factor), Var()};
                });
}

Var add_scalar(const Var& a, double c) {
  Tape& t = tape_of(a);
  return t.push(unary_map(a.value(), [c](double x) { return x + c; }), {a},
                [](const Var& g, const Var&, std::array<bool, 2>) { return std::array<Var, 2>{g, Var()}; });
}

Var exp(const Var& a) {
  Tape& t = tape_of(a);
  return t.push(unary_map(a.value(), [](double x) { return std::exp(x); }), {a},
                [](const Var& g, const Var& out, std::array<bool, 2>) {
                  return std::array<Var, 2>{mul(g, out), Var()};
                });
}

Var log(const Var& a) {
  Tape& t = tape_of(a);
  return t.push(unary_map(a.value(), [](double x) { return std::log(x); }), {a},
                [a](const Var& g, const Var&, std::array<bool, 2>) { return std::array<Var, 2>{div(g, a), Var()}; });
}

Var tanh(const Var& a) {
  Tape& t = tape_of(a);
  return t.push(unary_map(a.value(), [](double x) { return std::tanh(x); }), {a},
                [](const Var& g, const Var& out, std::array<bool, 2>) {
                  return std::array<Var, 2>{mul(g, add_scalar(neg(square(out)), 1.0)), Var()};
                });
}

namespace {
double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}
double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
}  // namespace

Var sigmoid(const Var& a) {
  Tape& t = tape_of(a);
  return t.push(unary_map(a.value(), stable_sigmoid), {a}, [](const Var& g, const Var& out, std::array<bool, 2>) {
    return std::array<Var, 2>{mul(g, mul(out, add_scalar(neg(out), 1.0))), Var()};
  });
}

Var softplus(const Var& a) {
  Tape& t = tape_of(a);
  return t.push(unary_map(a.value(), stable_softplus), {a}, [a](const Var& g, const Var&, std::array<bool, 2>) {
    return std::array<Var, 2>{mul(g, sigmoid(a)), Var()};
  });
}

Var relu(const Var& a) {
  Tape& t = tape_of(a);
  return t.push(unary_map(a.value(), [](double x) { return x > 0 ? x : 0.0; }), {a},
                [a](const Var& g, const Var&, std::array<bool, 2>) {
                  // Subgradient at 0 is 0.
                  Var mask = a.tape()->constant(unary_map(a.value(), [](double x) { return x > 0 ? 1.0 : 0.0; }));
                  return std::array<Var, 2>{mul(g, mask), Var()};
                });
}

Var clamp_min(const Var& a, double lo) {
  Tape& t = tape_of(a);
  return t.push(unary_map(a.value(), [lo](double x) { return x > lo ? x : lo; }), {a},
                [a, lo](const Var& g, const Var&, std::array<bool, 2>) {
                  Var mask = a.tape()->constant(unary_map(a.value(), [lo](double x) { return x > lo ? 1.0 : 0.0; }));
                  return std::array<Var, 2>{mul(g, mask), Var()};
                });
}

Var square(const Var& a) {
  Tape& t = tape_of(a);
  return t.push(unary_map(a.value(), [](double x) { return x * x; }), {a},
                [a](const Var& g, const Var&, std::array<bool, 2>) {
                  return std::array<Var, 2>{scale(mul(g, a), 2.0), Var()};
                });
}

// ---------------------------------------------------------------------------
// Linear algebra

Var matmul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const std::size_t n = A.rows(), k = A.cols(), m = B.cols();
  if (B.rows() != k) throw ShapeError("matmul: " + A.shape_string() + " x " + B.shape_string());
  Tensor C({n, m});
  const double* pa = A.data().data();
  const double* pb = B.data().data();
  double* pc = C.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = pc + i * m;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = pa[i * k + l];
      if (av == 0.0) continue;
      const double* brow = pb + l * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
  return t.push(std::move(C), {a, b}, [a, b](const Var& g, const Var&, std::array<bool, 2> need) {
    std::array<Var, 2> r;
    if (need[0]) r[0] = matmul(g, transpose(b));
    if (need[1]) r[1] = matmul(transpose(a), g);
    return r;
  });
}

Var transpose(const Var& a) {
  Tape& t = tape_of(a);
  return t.push(a.value().transposed(), {a}, [](const Var& g, const Var&, std::array<bool, 2>) {
    return std::array<Var, 2>{transpose(g), Var()};
  });
}

// ---------------------------------------------------------------------------
// Reductions and broadcasting

Var sum_to(const Var& a, std::size_t rows, std::size_t cols) {
  const Tensor& A = a.value();
  const std::size_t ar = A.rows(), ac = A.cols();
  if (ar == rows && ac == cols) return a;
  if ((rows != ar && rows != 1) || (cols != ac && cols != 1)) {
    throw ShapeError("sum_to: cannot reduce " + A.shape_string() + " to [" + std::to_string(rows) + "x" +
                     std::to_string(cols) + "]");
  }
  Tensor out({rows, cols});
  for (std::size_t i = 0; i < ar; ++i)
    for (std::size_t j = 0; j < ac; ++j) out((rows == 1 ? 0 : i), (cols == 1 ? 0 : j)) += A(i, j);
  Tape& t = tape_of(a);
  return t.push(std::move(out), {a}, [ar, ac](const Var& g, const Var&, std::array<bool, 2>) {
    return std::array<Var, 2>{broadcast_to(g, ar, ac), Var()};
  });
}

Var broadcast_to(const Var& a, std::size_t rows, std::size_t cols) {
  const Tensor& A = a.value();
  const std::size_t ar = A.rows(), ac = A.cols();
  if (ar == rows && ac == cols) return a;
  if ((ar != rows && ar != 1) || (ac != cols && ac != 1)) {
    throw ShapeError("broadcast_to: cannot expand " + A.shape_string());
  }
  Tensor out({rows, cols});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out(i, j) = A(ar == 1 ? 0 : i, ac == 1 ? 0 : j);
  Tape& t = tape_of(a);
  return t.push(std::move(out), {a}, [ar, ac](const Var& g, const Var&, std::array<bool, 2>) {
    return std::array<Var, 2>{sum_to(g, ar, ac), Var()};
  });
}

Var sum(const Var& a) { return sum_to(a, 1, 1); }

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var sum_rows(const Var& a) { return sum_to(a, a.value().rows(), 1); }

Var dot(const Var& a, const Var& b) { return sum(mul(a, b)); }

Var log_softmax(const Var& a) {
  const Tensor& A = a.value();
  const std::size_t n = A.rows(), k = A.cols();
  Tensor out({n, k});
  for (std::size_t i = 0; i < n; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) m = std::max(m, A(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(A(i, j) - m);
    double lse = m + std::log(s);
    for (std::size_t j = 0; j < k; ++j) out(i, j) = A(i, j) - lse;
  }
  Tape& t = tape_of(a);
  return t.push(std::move(out), {a}, [](const Var& g, const Var& out_var, std::array<bool, 2>) {
    return std::array<Var, 2>{sub(g, mul(exp(out_var), sum_rows(g))), Var()};
  });
}

Var softmax(const Var& a) { return exp(log_softmax(a)); }

Var logsumexp_rows(const Var& a) {
  const Tensor& A = a.value();
  Tensor m({A.rows(), 1});
  for (std::size_t i = 0; i < A.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < A.cols(); ++j) mx = std::max(mx, A(i, j));
    m(i, 0) = mx;
  }
  Var shift = tape_of(a).constant(std::move(m));
  return add(shift, log(sum_rows(exp(sub(a, shift)))));
}

// ---------------------------------------------------------------------------
// Shape manipulation

Var reshape(const Var& a, std::size_t rows, std::size_t cols) {
  const Tensor& A = a.value();
  if (A.rows() == rows && A.cols() == cols) return a;
  if (rows * cols != A.size()) throw ShapeError("reshape: size mismatch for " + A.shape_string());
  const std::size_t ar = A.rows(), ac = A.cols();
  Tape& t = tape_of(a);
  return t.push(A.reshaped({rows, cols}), {a}, [ar, ac](const Var& g, const Var&, std::array<bool, 2>) {
    return std::array<Var, 2>{reshape(g, ar, ac), Var()};
  });
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t end) {
  const Tensor& A = a.value();
  if (begin >= end || end > A.cols()) throw ShapeError("slice_cols: bad column range");
  const std::size_t n = A.rows(), total = A.cols(), w = end - begin;
  Tensor out({n, w});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < w; ++j) out(i, j) = A(i, begin + j);
  Tape& t = tape_of(a);
  return t.push(std::move(out), {a}, [begin, total](const Var& g, const Var&, std::array<bool, 2>) {
    return std::array<Var, 2>{pad_cols(g, begin, total), Var()};
  });
}

Var pad_cols(const Var& a, std::size_t begin, std::size_t total) {
  const Tensor& A = a.value();
  const std::size_t n = A.rows(), w = A.cols();
  if (begin + w > total) throw ShapeError("pad_cols: range exceeds total width");
  Tensor out({n, total});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < w; ++j) out(i, begin + j) = A(i, j);
  Tape& t = tape_of(a);
  return t.push(std::move(out), {a}, [begin, w](const Var& g, const Var&, std::array<bool, 2>) {
    return std::array<Var, 2>{slice_cols(g, begin, begin + w), Var()};
  });
}

Var slice_range(const Var& a, std::size_t offset, std::size_t rows, std::size_t cols) {
  const Tensor& A = a.value();
  const std::size_t count = rows * cols;
  if (count == 0 || offset + count > A.size()) throw ShapeError("slice_range: range exceeds tensor");
  std::vector<double> v(A.data().begin() + static_cast<std::ptrdiff_t>(offset),
                        A.data().begin() + static_cast<std::ptrdiff_t>(offset + count));
  const std::size_t ar = A.rows(), ac = A.cols();
  Tape& t = tape_of(a);
  return t.push(Tensor({rows, cols}, std::move(v)), {a}, [offset, ar, ac](const Var& g, const Var&, std::array<bool, 2>) {
    return std::array<Var, 2>{embed_range(g, offset, ar, ac), Var()};
  });
}

Var embed_range(const Var& a, std::size_t offset, std::size_t rows, std::size_t cols) {
  const Tensor& A = a.value();
  if (offset + A.size() > rows * cols) throw ShapeError("embed_range: range exceeds target");
  Tensor out({rows, cols});
  std::copy(A.data().begin(), A.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset));
  const std::size_t ar = A.rows(), ac = A.cols();
  Tape& t = tape_of(a);
  return t.push(std::move(out), {a}, [offset, ar, ac](const Var& g, const Var&, std::array<bool, 2>) {
    return std::array<Var, 2>{slice_range(g, offset, ar, ac), Var()};
  });
}

}  // namespace trustkit
