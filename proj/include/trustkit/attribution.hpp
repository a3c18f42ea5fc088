#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trustkit/autodiff.hpp"
#include "trustkit/dataset.hpp"
#include "trustkit/mlp.hpp"
#include "trustkit/probe.hpp"

namespace trustkit {

enum class Normalization { raw, abs_p99, none };

std::string to_string(Normalization n);

struct AttributionMap {
  /// Per-feature scores before normalization (signed for IG, absolute for gradients).
  std::vector<double> raw;
  /// Reported scores: normalized into [0, 1] for abs_p99, otherwise equal to raw.
  std::vector<double> scores;
  Normalization normalization = Normalization::none;
  double clip_percentile = 99.0;
  /// Normalization was requested but skipped (all-zero or constant map).
  bool degenerate = false;

  /// CSV with header feature,raw,normalized.
  std::string to_csv() const;
};

/// Nearest-rank percentile (value at 1-based rank ceil(p/100 * n)).
double percentile_nearest_rank(std::span<const double> v, double p);

/// min((m - min m) / (P_p(m) - min m), 1). Idempotent on its own output.
AttributionMap normalize_abs_p99(std::vector<double> raw, double clip_percentile = 99.0);

/// Scalar score per row, n x 1, for a batch of inputs n x d.
using BatchScore = std::function<Var(const Var& X)>;
/// Column `c` of the model's logits.
BatchScore class_score(const MlpModel& model, std::size_t c);
/// Softmax probability of class `c` (sigmoid for a single logit column).
BatchScore class_probability(const MlpModel& model, std::size_t c);

/// |dS_c/dx_i|, normalized with the 99th-percentile rule.
AttributionMap saliency(const BatchScore& score, const Tensor& x);
AttributionMap saliency(const MlpModel& model, const Tensor& x, std::size_t c);

struct SmoothGradConfig {
  std::size_t samples = 50;
  double sigma = 0.15;
  std::uint64_t seed = 0;
  /// Perturbed inputs are clamped to [lo, hi].
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
};

/// Mean of normalized saliency maps at x + eps_i, eps_i ~ N(0, sigma^2 I).
/// sigma = 0 returns saliency(x) itself.
AttributionMap smoothgrad(const BatchScore& score, const Tensor& x, const SmoothGradConfig& cfg);
AttributionMap smoothgrad(const MlpModel& model, const Tensor& x, std::size_t c, const SmoothGradConfig& cfg);

struct IgResult {
  AttributionMap map;
  /// |sum a_i - (f(x) - f(x0))|.
  double completeness_gap = 0.0;
};

/// Midpoint-rule integrated gradients from baseline x0 to x.
IgResult integrated_gradients(const BatchScore& score, const Tensor& x, const Tensor& x0, std::size_t steps);
IgResult integrated_gradients(const MlpModel& model, const Tensor& x, const Tensor& x0, std::size_t c,
                              std::size_t steps);

// ---- perturbation methods -------------------------------------------------

/// Black-box predictor: one score per input row.
using BlackBox = std::function<std::vector<double>(const Tensor& Z)>;
BlackBox model_blackbox(const MlpModel& model, std::size_t c, bool use_logit = false);

/// Per-feature means of a dataset, the default missingness fill.
std::vector<double> feature_means(const Tensor& X);

struct LimeConfig {
  std::size_t samples = 1000;
  double kernel_sigma = 1.0;
  std::size_t k_sparse = std::numeric_limits<std::size_t>::max();
  std::uint64_t seed = 0;
};

struct SparseSurrogate {
  /// One weight per feature; zero outside the active set.
  std::vector<double> weights;
  double intercept = 0.0;
  /// Features in the order forward selection added them.
  std::vector<std::size_t> active;
  /// Weighted R^2 of the surrogate on the sampled neighbourhood.
  double weighted_r2 = 0.0;
};

/// Masks z' draw m ~ U{1..d} features uniformly to keep; z = z' * x + (1 - z') * b.
/// Kernel pi = exp(-|x - z|^2 / sigma^2). Weighted least squares with forward
/// selection up to k_sparse features.
SparseSurrogate lime(const BlackBox& f, const Tensor& x, std::span<const double> baseline, const LimeConfig& cfg);

/// Coalition value v(S) for a bit mask S over d players (bit i = player i).
using SetFunction = std::function<double(std::uint64_t mask)>;

inline constexpr std::size_t kShapExactMaxPlayers = 20;

/// Exact Shapley values by enumerating all 2^d coalitions (d <= 20).
std::vector<double> shap_exact(const SetFunction& v, std::size_t d);

/// Monte Carlo Shapley values: per feature and sample, draw m ~ U{1..d} then a
/// uniform coalition of size m containing i, and average v(z) - v(z - i).
std::vector<double> shap_mc(const SetFunction& v, std::size_t d, std::size_t samples_per_feature,
                            std::uint64_t seed);

/// v(S) = f(x with features outside S replaced by the fill values).
SetFunction blackbox_game(const BlackBox& f, const Tensor& x, std::span<const double> fill);

// ---- concept testing ------------------------------------------------------

struct Cav {
  /// Unit normal of the concept/non-concept probe boundary at the layer.
  std::vector<double> v;
  std::size_t layer = 0;
  double probe_accuracy = 0.0;
};

struct TcavConfig {
  ProbeConfig probe{};
  std::size_t random_cavs = 10;
  std::uint64_t seed = 0;
  double min_probe_accuracy = 0.7;

  TcavConfig() { probe.holdout = 0.3; }
};

struct TcavResult {
  Cav cav;
  double score = 0.0;
  /// False when the held-out probe accuracy is at most min_probe_accuracy.
  bool reliable = true;
  /// Scores of CAVs trained on randomly relabelled concept examples.
  std::vector<double> random_scores;
  double t_statistic = 0.0;
  /// Two-sided one-sample t-test of the random scores against `score`.
  double p_value = 1.0;
};

/// CAV from activations of layers [0, layer) of concept (label 1) vs
/// non-concept (label 0) inputs.
Cav fit_cav(const MlpModel& model, std::size_t layer, const Tensor& concept_pos, const Tensor& concept_neg,
            const ProbeConfig& probe);

/// S(x) = grad_{f_l(x)} h_{l,k} . v for each row of X.
std::vector<double> concept_sensitivity(const MlpModel& model, const Cav& cav, std::size_t k, const Tensor& X);

/// Fraction of rows with S(x) > 0 (strictly).
double tcav_score(const MlpModel& model, const Cav& cav, std::size_t k, const Tensor& X);

TcavResult tcav(const MlpModel& model, std::size_t layer, const Tensor& concept_pos, const Tensor& concept_neg,
                std::size_t k, const Tensor& X_k, const TcavConfig& cfg = {});

// ---- evaluation protocols -------------------------------------------------

/// Attribution of one input row (1 x d) under a given model.
using AttributionFn = std::function<std::vector<double>(const MlpModel& model, const Tensor& x)>;

struct CascadeResult {
  /// Layers randomized so far at each stage, output layer first.
  std::vector<std::size_t> order;
  /// Spearman correlation of |map| against the original |map|; stage 0 is the intact model.
  std::vector<double> spearman;
};

/// Re-initializes layers from the output towards the input, cumulatively,
/// with the model's own initializer.
CascadeResult cascading_randomization(const MlpModel& model, const AttributionFn& attribution, const Tensor& x,
                                      std::uint64_t seed);

struct RemoveClassifyResult {
  std::vector<double> fractions;
  std::vector<double> accuracy;
  std::vector<double> random_accuracy;
  /// accuracy / random_accuracy (1 where both are 0).
  std::vector<double> relative;
  /// Trapezoidal areas over the fractions.
  double auc = 0.0;
  double random_auc = 0.0;

  std::string to_csv() const;
  std::string to_svg() const;
};

/// Replaces the top round(k d) features of each row (by descending score,
/// lower index first on ties) with the fill value and re-evaluates accuracy.
/// The baseline removes a seeded random subset of the same size.
RemoveClassifyResult remove_and_classify(const MlpModel& model, const AttributionFn& attribution,
                                         const LabeledDataset& data, std::span<const double> fractions,
                                         std::span<const double> fill, std::uint64_t seed);

}  // namespace trustkit
