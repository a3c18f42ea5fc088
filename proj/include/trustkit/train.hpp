#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "trustkit/autodiff.hpp"
#include "trustkit/dataset.hpp"
#include "trustkit/mlp.hpp"

namespace trustkit {

struct LrSchedule {
  enum class Kind { constant, linear };
  Kind kind = Kind::constant;
  double lr = 0.1;
  /// End value for the linear schedule.
  double final_lr = 0.0;

  static LrSchedule constant(double lr) { return {Kind::constant, lr, lr}; }
  static LrSchedule linear(double from, double to) { return {Kind::linear, from, to}; }
  double at(std::size_t step, std::size_t total_steps) const;
};

struct TrainConfig {
  LrSchedule lr = LrSchedule::constant(0.1);
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  double weight_decay = 0.0;
  std::size_t checkpoint_every = 1;
  /// Record (theta_t, eta_t, B_t) at every step, as TracIn needs.
  bool tracin_full = false;

  /// Throws DomainError when a positivity constraint is violated. A zero
  /// learning rate is accepted (it freezes the parameters).
  void validate() const;
};

/// Training history. Entry t holds the parameters *before* update t, the
/// learning rate used at t, and the member ids of batch t. The last entry is
/// the final parameters (lr 0, empty batch).
struct CheckpointTrace {
  struct Entry {
    std::size_t step = 0;
    std::vector<double> theta;
    double lr = 0.0;
    std::vector<std::size_t> batch;
  };
  std::vector<Entry> entries;
  /// Parameters at the end of each epoch.
  std::vector<std::vector<double>> epoch_snapshots;
  /// Mean training loss per epoch.
  std::vector<double> epoch_loss;
  std::size_t total_steps = 0;
  bool full = false;
};

/// Shuffled mini-batches of one epoch; the last batch may be short.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    std::size_t epoch);

/// Batch objective: build the scalar mean loss of `batch` from `theta`.
/// `step_seed` is a per-step seed for dropout masks and other noise.
using BatchObjective =
    std::function<Var(Tape& tape, const Var& theta, std::span<const std::size_t> batch, std::uint64_t step_seed)>;

/// Minibatch SGD on a flat parameter vector:
///   theta <- theta - eta_t (grad L_B(theta) + weight_decay * theta)
/// where L_B is the batch mean loss.
CheckpointTrace train_loop(std::vector<double>& theta, std::size_t n, const TrainConfig& cfg,
                           const BatchObjective& objective);

/// Plain supervised training of `model` with the given loss. Dropout layers
/// are active during training with per-step masks.
CheckpointTrace train_sgd(MlpModel& model, const LabeledDataset& data, const TrainConfig& cfg, LossKind kind);

/// Seed used for step `step` in train_loop (exposed so callers can replay masks).
std::uint64_t step_seed(std::uint64_t seed, std::size_t step);

}  // namespace trustkit
