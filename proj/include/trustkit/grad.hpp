#pragma once

#include <functional>
#include <span>
#include <vector>

#include "trustkit/autodiff.hpp"
#include "trustkit/mlp.hpp"

namespace trustkit {

/// Gradient of a scalar node w.r.t. the parameter node, flattened in param order.
/// Throws TapeError when `loss` does not depend on anything differentiable.
std::vector<double> grad_params(const Var& loss, const Var& theta);

/// Gradient of a scalar node w.r.t. an input node. A node that does not depend
/// on `x` yields zeros.
std::vector<double> grad_input(const Var& node, const Var& x);

/// Scalar function built from differentiable ops; receives a 1 x d leaf.
using ScalarFn = std::function<Var(const Var&)>;

std::vector<double> gradient(const ScalarFn& f, std::span<const double> x);
/// Exact Hessian-vector product: the gradient of (grad f . v).
std::vector<double> hvp(const ScalarFn& f, std::span<const double> x, std::span<const double> v);
/// Dense Hessian (row-major d x d), assembled column-wise from hvp.
std::vector<double> hessian(const ScalarFn& f, std::span<const double> x);

struct HvpResult {
  std::vector<double> value;
  /// Set for relu networks, whose curvature is zero almost everywhere.
  bool piecewise_linear = false;
};

/// Hessian-vector product of the mean training loss of `model` on (X, targets)
/// plus (weight_decay/2)|theta|^2, at the model's current parameters.
HvpResult hvp(const MlpModel& model, const Tensor& X, const Tensor& targets, LossKind kind,
              std::span<const double> v, double weight_decay = 0.0);

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h.
std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> x, double h);

}  // namespace trustkit
