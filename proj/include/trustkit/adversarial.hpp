#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "trustkit/autodiff.hpp"
#include "trustkit/dataset.hpp"
#include "trustkit/mlp.hpp"
#include "trustkit/rng.hpp"
#include "trustkit/train.hpp"

namespace trustkit {

/// L-infinity attack parameters. Only p = inf is supported.
struct AttackConfig {
  double eps = 0.03;
  double alpha = 0.01;
  std::size_t steps = 10;
  double lo = 0.0;
  double hi = 1.0;
  double p = std::numeric_limits<double>::infinity();
  /// Draw the PGD start uniformly from the eps-box.
  bool random_start = false;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::softmax_ce;

  void validate() const;
};

/// Scalar attack objective as a function of the (n x d) input node.
using InputLoss = std::function<Var(const Var& x)>;

/// Summed per-sample loss of `model`, so each row's gradient is the gradient
/// of that sample's own loss.
InputLoss model_input_loss(const MlpModel& model, const Tensor& targets, LossKind kind);

struct PgdResult {
  Tensor x_adv;
  /// Objective at the start point and after every iteration.
  std::vector<double> loss_trace;
};

/// x + eps sgn(grad), clipped to [lo, hi]; sgn(0) = 0.
Tensor fgsm(const InputLoss& objective, const Tensor& X, const AttackConfig& cfg);
Tensor fgsm(const MlpModel& model, const Tensor& X, const Tensor& targets, const AttackConfig& cfg);

/// T signed ascent steps of size alpha, each projected onto
/// [x - eps, x + eps] intersected with [lo, hi].
PgdResult pgd(const InputLoss& objective, const Tensor& X, const AttackConfig& cfg);
Tensor pgd(const MlpModel& model, const Tensor& X, const Tensor& targets, const AttackConfig& cfg);

/// Per-sample loss of `model` at X (n values).
std::vector<double> per_sample_values(const MlpModel& model, const Tensor& X, const Tensor& targets, LossKind kind);

/// Replaces every batch by its PGD attack against the current parameters
/// before the SGD step. With eps = 0 the trajectory equals train_sgd.
CheckpointTrace adversarial_train(MlpModel& model, const LabeledDataset& data, const TrainConfig& train,
                                  const AttackConfig& attack);

struct AttackRow {
  double eps = 0.0;
  double clean = 0.0;
  double fgsm = 0.0;
  double pgd = 0.0;
};

/// Clean, FGSM and PGD accuracy for each radius (alpha scales with eps as
/// alpha / eps in `cfg`).
std::vector<AttackRow> attack_report(const MlpModel& model, const LabeledDataset& data,
                                     const std::vector<double>& eps_grid, const AttackConfig& cfg);
std::string attack_report_csv(const std::vector<AttackRow>& rows);

/// Differentiable input transform t(x).
using Transform = std::function<Var(const Var& x)>;
using TransformSampler = std::function<Transform(Rng& rng)>;

/// Monte Carlo mean over M sampled transforms of grad_x objective(t(x)).
Tensor eot_gradient(const InputLoss& objective, const Tensor& X, const TransformSampler& sampler, std::size_t M,
                    std::uint64_t seed);
/// Same with the summed per-sample loss of `model` as the objective.
Tensor eot_gradient(const MlpModel& model, const Tensor& X, const Tensor& targets, LossKind kind,
                    const TransformSampler& sampler, std::size_t M, std::uint64_t seed);

/// Coordinate permutation as a transform (gradients map back through it).
Transform permutation_transform(std::vector<std::size_t> perm);

}  // namespace trustkit
