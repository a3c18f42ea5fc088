#pragma once

#include <cstdint>
#include <span>

#include "trustkit/mlp.hpp"

namespace trustkit {

struct ProbeConfig {
  std::size_t epochs = 100;
  double lr = 0.5;
  std::size_t batch_size = 64;
  /// Fraction of rows held out for the reported test accuracy (0 disables).
  double holdout = 0.0;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
};

struct ProbeResult {
  /// Linear softmax model on the raw (unstandardized) features.
  MlpModel model;
  double train_accuracy = 0.0;
  /// Held-out accuracy; equals train_accuracy when holdout is 0.
  double test_accuracy = 0.0;
};

/// Multinomial logistic regression on standardized features, with the
/// standardization folded back into the returned weights.
ProbeResult fit_linear_probe(const Tensor& features, std::span<const int> labels, std::size_t classes,
                             const ProbeConfig& cfg = {});

}  // namespace trustkit
