#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>

#include "json.hpp"
#include "trustkit/dataset.hpp"

namespace trustkit {

/// Two isotropic 2-D Gaussians with a shared standard deviation.
struct TwoGaussianSpec {
  std::array<double, 2> mu0{-1.0, -1.0};
  std::array<double, 2> mu1{1.0, 1.0};
  double sigma = 1.0;
  std::size_t n = 1000;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static TwoGaussianSpec from_json(const nlohmann::json& j);
};

/// n/2 rows per class (even rows class 0, odd rows class 1).
LabeledDataset gen_two_gaussians(const TwoGaussianSpec& spec);

/// Bayes posterior P(Y = k | x) under a uniform label prior. The two class
/// posteriors sum to exactly 1.
double posterior_two_gaussians(std::span<const double> x, const TwoGaussianSpec& spec, int k = 0);

/// Task cue y and bias cue z, each embedded as a scaled one-hot prototype
/// plus Gaussian noise: x = [task_scale e_y + eps || bias_scale e_z + eps].
struct DiagonalSpec {
  std::size_t n = 1000;
  std::size_t classes = 2;
  /// P(z = y); otherwise z is drawn uniformly.
  double rho = 1.0;
  std::size_t embed_dim = 2;
  double noise_sigma = 0.1;
  std::uint64_t seed = 0;
  /// Draw z independently of y (unbiased evaluation split).
  bool unbiased = false;
  double task_scale = 1.0;
  double bias_scale = 1.0;

  nlohmann::json to_json() const;
  static DiagonalSpec from_json(const nlohmann::json& j);
};

/// Rows carry labels y, bias labels z and group id y * K + z.
LabeledDataset gen_diagonal(const DiagonalSpec& spec);

/// Binary task with a core and a spurious coordinate:
/// x = [(2y - 1) core_shift + core_sigma eps, (2a - 1) spurious_shift + spurious_sigma eps].
/// The spurious attribute a agrees with y with probability `majority`
/// (or is independent when `balanced`). Groups are 2y + a.
struct SpuriousSpec {
  std::size_t n = 2000;
  double majority = 0.97;
  double core_shift = 1.0;
  double core_sigma = 1.0;
  double spurious_shift = 1.0;
  double spurious_sigma = 0.2;
  bool balanced = false;
  std::uint64_t seed = 0;
};

LabeledDataset gen_spurious_groups(const SpuriousSpec& spec);

/// Features in [0, 1]: one robust coordinate at 0.1 / 0.9 (by class, noise
/// sd 0.05) followed by `weak` coordinates at 0.5 -/+ weak_shift with noise
/// sd weak_sigma, all clipped to [0, 1].
struct RobustFeatureSpec {
  std::size_t n = 1000;
  std::size_t weak = 50;
  double weak_shift = 0.1;
  double weak_sigma = 0.1;
  std::uint64_t seed = 0;
};

LabeledDataset gen_robust_features(const RobustFeatureSpec& spec);

/// Regression data y = mean_fn(x) + std_fn(x) * eps with x ~ U(x_range).
LabeledDataset gen_heteroscedastic(std::size_t n, const std::function<double(double)>& mean_fn,
                                   const std::function<double(double)>& std_fn, std::array<double, 2> x_range,
                                   std::uint64_t seed);

struct CsvSchema {
  /// Class count; inferred as max label + 1 when unset.
  std::optional<std::size_t> num_classes;
};

/// Header: feature_0..feature_{d-1}, then `label` (classification) or
/// target_0.. (regression), then optional `group` and `bias` columns.
LabeledDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
void save_csv(const LabeledDataset& data, const std::filesystem::path& path);

}  // namespace trustkit
