#include "trustkit/grad.hpp"

#include "trustkit/errors.hpp"

namespace trustkit {

std::vector<double> grad_params(const Var& loss, const Var& theta) {
  if (!loss.valid() || !theta.valid()) throw TapeError("grad_params on an invalid node");
  if (loss.value().size() != 1) throw TapeError("grad_params needs a scalar loss");
  return loss.tape()->gradient(loss, theta).value().data();
}

std::vector<double> grad_input(const Var& node, const Var& x) {
  if (!node.valid() || !x.valid()) throw TapeError("grad_input on an invalid node");
  if (node.value().size() != 1) throw TapeError("grad_input needs a scalar node");
  if (!node.requires_grad()) return std::vector<double>(x.value().size(), 0.0);
  return node.tape()->gradient(node, x).value().data();
}

std::vector<double> gradient(const ScalarFn& f, std::span<const double> x) {
  Tape tape;
  Var xv = tape.variable(Tensor::row({x.begin(), x.end()}));
  Var y = f(xv);
  return grad_input(y, xv);
}

std::vector<double> hvp(const ScalarFn& f, std::span<const double> x, std::span<const double> v) {
  if (v.size() != x.size()) throw ShapeError("hvp: vector length differs from the point");
  Tape tape;
  Var xv = tape.variable(Tensor::row({x.begin(), x.end()}));
  Var y = f(xv);
  if (!y.requires_grad()) return std::vector<double>(x.size(), 0.0);
  GradOptions opts;
  opts.create_graph = true;
  Var g = tape.gradient(y, xv, opts);
  Var gv = dot(g, tape.constant(Tensor::row({v.begin(), v.end()})));
  return grad_input(gv, xv);
}

std::vector<double> hessian(const ScalarFn& f, std::span<const double> x) {
  const std::size_t d = x.size();
  Tape tape;
  Var xv = tape.variable(Tensor::row({x.begin(), x.end()}));
  Var y = f(xv);
  std::vector<double> H(d * d, 0.0);
  if (!y.requires_grad()) return H;
  GradOptions opts;
  opts.create_graph = true;
  Var g = tape.gradient(y, xv, opts);
  for (std::size_t j = 0; j < d; ++j) {
    Var gj = slice_cols(g, j, j + 1);
    std::vector<double> col = grad_input(gj, xv);
    for (std::size_t i = 0; i < d; ++i) H[i * d + j] = col[i];
  }
  return H;
}

HvpResult hvp(const MlpModel& model, const Tensor& X, const Tensor& targets, LossKind kind,
              std::span<const double> v, double weight_decay) {
  const Tensor Xc = X;
  ScalarFn f = [&](const Var& theta) {
    Tape& tape = *theta.tape();
    Var out = loss(forward(model, theta, tape.constant(Xc)), targets, kind);
    if (weight_decay > 0) out = add(out, scale(dot(theta, theta), 0.5 * weight_decay));
    return out;
  };
  HvpResult r;
  r.value = hvp(f, model.params(), v);
  r.piecewise_linear = model.piecewise_linear();
  return r;
}

std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> x, double h) {
  if (!(h > 0)) throw DomainError("finite_diff_grad needs h > 0");
  std::vector<double> xp(x.begin(), x.end());
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double xi = xp[i];
    xp[i] = xi + h;
    double fp = f(xp);
    xp[i] = xi - h;
    double fm = f(xp);
    xp[i] = xi;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

}  // namespace trustkit
