#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "json.hpp"
#include "trustkit/mlp.hpp"
#include "trustkit/tensor.hpp"

namespace trustkit {

/// Rows (x_i, y_i) with optional group and bias labels.
///
/// Classification sets fill `labels` (and `num_classes`); regression sets fill
/// `targets` (n x t) and leave `labels` empty.
struct LabeledDataset {
  Tensor X;
  std::vector<int> labels;
  Tensor targets;
  std::vector<int> groups;
  std::vector<int> bias;
  std::size_t num_classes = 0;
  nlohmann::json meta = nlohmann::json::object();

  std::size_t size() const { return X.empty() ? 0 : X.rows(); }
  std::size_t dim() const { return X.empty() ? 0 : X.cols(); }
  bool is_regression() const { return labels.empty() && !targets.empty(); }
  bool has_groups() const { return !groups.empty(); }
  std::size_t num_groups() const;

  /// Throws if column lengths disagree or labels exceed num_classes.
  void validate() const;
  LabeledDataset subset(std::span<const std::size_t> rows) const;
  /// Rows of X for `rows`.
  Tensor features(std::span<const std::size_t> rows) const;
  /// Loss targets for `rows` in the layout per_sample_loss expects.
  Tensor loss_targets(std::span<const std::size_t> rows, LossKind kind) const;
  Tensor loss_targets(LossKind kind) const;
  std::vector<std::size_t> all_rows() const;
};

LabeledDataset concat(const LabeledDataset& a, const LabeledDataset& b);

/// Fraction of rows whose predicted argmax matches the label.
double accuracy(const MlpModel& model, const LabeledDataset& data);
double accuracy(const Tensor& logits, std::span<const int> labels);

}  // namespace trustkit
