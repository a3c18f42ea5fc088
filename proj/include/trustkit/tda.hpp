#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trustkit/dataset.hpp"
#include "trustkit/mlp.hpp"
#include "trustkit/train.hpp"

namespace trustkit {

/// Dense curvature work is limited to this many parameters.
inline constexpr std::size_t kTdaMaxParams = 2000;

/// A trained model together with the objective it was fit on:
///   R(theta) = (1/n) sum_j w_j L(z_j, theta) + (weight_decay/2) |theta|^2.
struct InfluenceProblem {
  MlpModel model;
  Tensor X;
  /// Loss targets (n x 1 class ids for softmax_ce, n x k otherwise).
  Tensor targets;
  LossKind kind = LossKind::softmax_ce;
  double weight_decay = 0.0;
  /// Per-sample weights, all 1 by default.
  std::vector<double> weights;

  static InfluenceProblem from(const MlpModel& model, const LabeledDataset& data, LossKind kind,
                               double weight_decay = 0.0);

  std::size_t size() const { return X.rows(); }
  std::size_t param_count() const { return model.param_count(); }

  /// L(z, theta) for a single row x (1 x d) and its target row.
  double loss_at(std::span<const double> theta, const Tensor& x, const Tensor& target) const;
  /// grad_theta L(z, theta); theta defaults to the model's parameters.
  std::vector<double> grad_at(const Tensor& x, const Tensor& target) const;
  std::vector<double> grad_at(std::span<const double> theta, const Tensor& x, const Tensor& target) const;
  /// grad L(z_j) for training row j.
  std::vector<double> sample_grad(std::size_t j) const;
  std::vector<double> sample_grad(std::span<const double> theta, std::size_t j) const;
  /// All training gradients, n x p.
  Tensor train_gradients() const;

  /// R(theta) with sample `exclude` (if < n) dropped but the 1/n factor kept.
  double objective(std::span<const double> theta, std::size_t exclude = static_cast<std::size_t>(-1)) const;
  /// Hessian of R at the model's parameters, p x p, built from hvp on basis vectors.
  Tensor hessian() const;
  /// H v at the model's parameters; restricted to `rows` (mean over them) when given.
  std::vector<double> hvp(std::span<const double> v) const;
  std::vector<double> hvp(std::span<const double> v, std::span<const std::size_t> rows) const;

  Tensor target_row(std::size_t j) const;
};

struct InfluenceReport {
  std::string method;
  /// One score per training sample.
  std::vector<double> scores;
  double damping = 0.0;
  std::size_t iterations = 0;
  std::size_t k = 0;
  /// Set for estimates that only sum over stored checkpoints.
  bool approximate = false;

  /// CSV with header sample,score,label,flipped; labels/flips may be empty.
  std::string to_csv(std::span<const int> labels = {}, std::span<const int> flipped = {}) const;
};

inline constexpr double kDefaultDamping = 0.01;

/// Solves (H + damping I) x = v by Cholesky. Throws NumericError when the
/// damped matrix is not positive definite or the residual exceeds 1e-8.
std::vector<double> damped_solve(const Tensor& H, std::span<const double> v, double damping);

/// IF(z_j, z) = grad L(z)^T (H + damping I)^-1 grad L(z_j) for every j.
InfluenceReport influence_from_hessian(const Tensor& H, std::span<const double> test_grad, const Tensor& train_grads,
                                       double damping);

/// Exact influence of every training sample on the loss at (x, target).
InfluenceReport exact_influence(const InfluenceProblem& problem, const Tensor& x, const Tensor& target,
                                double damping = kDefaultDamping);

/// v -> H v, possibly on a random batch selected by `seed`.
using HvpOracle = std::function<std::vector<double>(std::span<const double> v, std::uint64_t seed)>;

/// Batch-subsampled HVP oracle of the problem (batch_size >= n uses every row).
HvpOracle problem_hvp_oracle(const InfluenceProblem& problem, std::size_t batch_size);

struct LissaConfig {
  /// Spectral scale s; the recursion needs |(H + damping I)/s| < 1.
  double scale = 1.0;
  double damping = kDefaultDamping;
  std::size_t iterations = 500;
  std::size_t repeats = 1;
  std::uint64_t seed = 0;
};

struct LissaResult {
  std::vector<double> estimate;
  std::size_t iterations = 0;
};

/// h_0 = v, h_i = v + (I - (H + damping I)/s) h_{i-1}; returns mean_r h_t / s.
/// Throws NumericError when |h_i| exceeds 10 (i + 1) |v|, which a convergent
/// recursion cannot reach.
LissaResult lissa_ihvp(const HvpOracle& oracle, std::span<const double> v, const LissaConfig& cfg);

/// factor * max_i sum_j |H_ij| of the dense Hessian, an upper bound on its
/// spectral radius.
double lissa_scale_bound(const Tensor& H, double factor = 10.0);

/// TracIn(z_j, z) = sum over steps t with j in B_t of (eta_t/|B_t|) <grad L(z_j, theta_t), grad L(z, theta_t)>.
/// Requires a trace recorded with tracin_full. Summed over j it approximates
/// L(z, theta_0) - L(z, theta_T).
InfluenceReport tracin(const InfluenceProblem& problem, const CheckpointTrace& trace, const Tensor& x,
                       const Tensor& target);
double tracin_pair(const InfluenceProblem& problem, const CheckpointTrace& trace, std::size_t j, const Tensor& x,
                   const Tensor& target);
/// Checkpoint variant: sum over stored entries c of eta_c <grad L(z_j, theta_c), grad L(z, theta_c)>
/// regardless of batch membership. Flagged approximate.
InfluenceReport tracin_checkpoints(const InfluenceProblem& problem, const CheckpointTrace& trace, const Tensor& x,
                                   const Tensor& target);

/// Top-k |eigenvalue| projection: IF = sum_i (u_i . g_z)(u_i . g_j) / lambda_i.
/// Exact symmetric eigendecomposition stands in for an Arnoldi iteration.
InfluenceReport eig_projected_influence(const Tensor& H, std::size_t k, std::span<const double> test_grad,
                                        const Tensor& train_grads);

enum class SelfInfluenceMethod { exact, tracin };

struct SelfInfluenceResult {
  std::vector<double> scores;
  /// AUROC of the scores against the flip mask (flipped = positive); unset
  /// without a mask containing both classes.
  std::optional<double> auroc;
};

/// Self-influence IF(z_j, z_j) or TracIn(z_j, z_j) for every training sample.
SelfInfluenceResult self_influence(const InfluenceProblem& problem, SelfInfluenceMethod method,
                                   const CheckpointTrace* trace = nullptr, std::span<const int> flipped = {},
                                   double damping = kDefaultDamping);

/// Relabels round(fraction n) uniformly chosen rows to a different class
/// (uniform over the others) and returns the 0/1 flip mask.
std::vector<int> flip_labels(LabeledDataset& data, double fraction, std::uint64_t seed);

/// JSON summary: method, auroc, number flipped, and the flipped ids ranked by score.
std::string mislabel_report_json(const SelfInfluenceResult& result, std::span<const int> flipped,
                                 const std::string& method);

struct LooConfig {
  std::size_t max_iters = 100;
  /// Converged once |grad R| falls below this.
  double grad_tol = 1e-10;
};

struct FitResult {
  std::vector<double> theta;
  double grad_norm = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Damped Newton minimisation of R from theta0, optionally without one sample.
FitResult fit_newton(const InfluenceProblem& problem, std::span<const double> theta0, const LooConfig& cfg,
                     std::size_t exclude = static_cast<std::size_t>(-1));

struct LooResult {
  /// L(z, theta_{-j}) - L(z, theta) per test row.
  std::vector<double> delta;
  bool converged = false;
};

/// Leave-one-out oracle. Both the full and the leave-one-out fits start from
/// the same theta0 and keep the 1/n factor, so delta ~ IF / n to first order.
class LooOracle {
 public:
  LooOracle(InfluenceProblem problem, std::vector<double> theta0, LooConfig cfg = {});

  const FitResult& full_fit() const { return full_; }
  const InfluenceProblem& problem() const { return problem_; }
  LooResult delta(std::size_t j, const Tensor& X_test, const Tensor& targets_test) const;

 private:
  InfluenceProblem problem_;
  std::vector<double> theta0_;
  LooConfig cfg_;
  FitResult full_;
};

LooResult loo_retrain_oracle(const InfluenceProblem& problem, std::span<const double> theta0, std::size_t j,
                             const Tensor& X_test, const Tensor& targets_test, const LooConfig& cfg = {});

}  // namespace trustkit
