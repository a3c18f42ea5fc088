#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "trustkit/tensor.hpp"

namespace trustkit {

/// Probability clamp applied before every logarithm.
inline constexpr double kProbClamp = 1e-12;

/// Per-sample class probabilities with labels and confidences.
///
/// Rows must lie on the simplex (1e-9). A single-column set is read as
/// Bernoulli probabilities of the positive class.
struct PredictionSet {
  Tensor probs;
  std::vector<int> labels;
  /// Optional c(x); max-prob is used when empty.
  std::vector<double> confidence;
  /// Optional logits behind `probs`.
  Tensor logits;

  static PredictionSet from_probs(Tensor probs, std::vector<int> labels);
  static PredictionSet from_logits(const Tensor& logits, std::vector<int> labels, double temperature = 1.0);

  std::size_t size() const { return labels.size(); }
  std::size_t classes() const { return probs.cols(); }
  void validate() const;
  std::vector<double> confidences() const;
  std::vector<std::size_t> predictions() const;
  /// Correctness indicator 1(argmax f = y).
  std::vector<int> correct() const;
};

struct ScoreResult {
  std::vector<double> per_sample;
  double mean = 0.0;
  /// Number of probabilities raised to kProbClamp.
  std::size_t clamped = 0;
};

/// log f_y(x), clamped at kProbClamp.
double log_score_value(std::span<const double> f, int y);
/// -(1 - f_y)^2 - sum_{k != y} f_k^2.
double brier_score_value(std::span<const double> f, int y);

ScoreResult log_score(const PredictionSet& p);
/// Binary path: S(q, y) = -(q - y)^2 on the positive-class probability.
/// Multi-class path requires K >= 2.
ScoreResult brier_score(const PredictionSet& p, bool multiclass);

struct CalibrationBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  double accuracy = 0.0;
  double confidence = 0.0;
};

struct CalibrationReport {
  std::size_t bins = 10;
  std::size_t n = 0;
  std::vector<CalibrationBin> per_bin;
  double ece = 0.0;
  double mce = 0.0;

  nlohmann::json to_json() const;
};

/// Bin index in [0, M) for confidence c, with bins ((m-1)/M, m/M] and c = 0
/// assigned to the first bin.
std::size_t calibration_bin(double c, std::size_t M);

CalibrationReport ece_report(const PredictionSet& p, std::size_t M = 10);
CalibrationReport ece_report(std::span<const double> confidence, std::span<const int> correct, std::size_t M = 10);

/// Reliability diagram (accuracy bars with gap overlay) above a confidence histogram.
std::string reliability_svg(const CalibrationReport& report, const std::string& title = "Reliability diagram");

/// softmax(logits / T) row-wise.
Tensor temperature_scale(const Tensor& logits, double T);

struct TemperatureFit {
  double temperature = 1.0;
  double ece = 0.0;
  std::vector<double> grid;
  std::vector<double> grid_ece;
};

/// argmin-ECE temperature over `grid`; ties resolve to the smallest T.
TemperatureFit fit_temperature(const Tensor& logits, std::span<const int> labels, std::span<const double> grid,
                               std::size_t M = 10);

struct DetectionCurves {
  /// Unique scores, descending. Point i predicts positive for score >= thresholds[i].
  std::vector<double> thresholds;
  std::vector<double> tpr;
  std::vector<double> fpr;
  std::vector<double> precision;
  std::vector<double> recall;
  /// Unset when only one class is present.
  std::optional<double> auroc;
  double aupr_success = 0.0;
  double aupr_error = 0.0;

  nlohmann::json to_json() const;
};

/// Mann-Whitney AUROC with half credit for ties. Throws DomainError when a
/// class is missing.
double auroc(std::span<const double> scores, std::span<const int> labels);
/// Step-interpolated average precision with label 1 as the positive class.
/// Returns 0 when there are no positives.
double average_precision(std::span<const double> scores, std::span<const int> labels);

/// Threshold sweep over unique scores; labels are 1 (positive) or 0.
/// aupr_error uses label 0 as positive with negated scores.
DetectionCurves detection_metrics(std::span<const double> scores, std::span<const int> labels);

struct NllPerplexity {
  double nll = 0.0;
  double perplexity = 1.0;
  std::size_t clamped = 0;
};

/// Mean NLL and perplexity 2^(-(1/n) sum log2 f_y).
NllPerplexity nll_perplexity(const PredictionSet& p);

/// Shannon entropy (nats) of a probability row.
double entropy(std::span<const double> p);

/// 1-based ranks with ties sharing their average rank.
std::vector<double> average_ranks(std::span<const double> v);
/// Pearson correlation. Returns 0 when exactly one side is constant and 1
/// when both are.
double pearson(std::span<const double> a, std::span<const double> b);
/// Pearson correlation of average ranks.
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace trustkit
