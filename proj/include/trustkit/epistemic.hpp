#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "trustkit/autodiff.hpp"
#include "trustkit/dataset.hpp"
#include "trustkit/mlp.hpp"
#include "trustkit/train.hpp"

namespace trustkit {

// ---- posterior samplers ----------------------------------------------------

/// Dirac mixture over trained parameter vectors.
struct EnsembleSampler {
  std::vector<std::vector<double>> members;
};

/// Stochastic forward passes of a dropout model with train-mode masks.
struct McDropoutSampler {
  std::vector<double> theta;
};

/// Factorized Gaussian N(mu, diag sigma^2).
struct GaussianDiagSampler {
  std::vector<double> mu;
  std::vector<double> sigma;
};

/// SWAG moments. `cov` is the dense p x p covariance (row-major) when fitted
/// with the full option, otherwise empty and `diag` is used.
struct SwagSampler {
  std::vector<double> mu;
  std::vector<double> diag;
  std::vector<double> cov;
  double damping = 1e-8;

  bool full() const { return !cov.empty(); }
};

/// Piecewise-linear curve through theta1 -> phi -> theta2, sampled with t ~ U[0, 1].
struct CurveSampler {
  std::vector<double> theta1;
  std::vector<double> theta2;
  std::vector<double> phi;
};

using PosteriorSampler = std::variant<EnsembleSampler, McDropoutSampler, GaussianDiagSampler, SwagSampler, CurveSampler>;

std::string sampler_kind(const PosteriorSampler& s);

struct BmaResult {
  /// Mean class probabilities, n x K.
  Tensor mean_probs;
  /// Entropy of the mean prediction (total uncertainty).
  std::vector<double> entropy_of_mean;
  /// Mean of member entropies (expected aleatoric part).
  std::vector<double> mean_entropy;
  std::vector<double> max_prob;
  /// Per-class variance of member probabilities across draws, n x K.
  Tensor variance;
  std::size_t draws = 0;

  /// entropy_of_mean - mean_entropy per row.
  std::vector<double> mutual_information() const;
};

/// Bayesian model average from explicit member probability matrices.
BmaResult bma_from_members(std::span<const Tensor> member_probs);

/// Monte Carlo BMA (1/K) sum_k P(y | x, theta_k). Ensembles use every member
/// and ignore K. `model_template` supplies the architecture.
BmaResult predict_bma(const PosteriorSampler& sampler, const MlpModel& model_template, const Tensor& X,
                      std::size_t K, std::uint64_t seed);

/// Seed used for ensemble member m (member 0 keeps the base seed).
std::uint64_t member_seed(std::uint64_t seed, std::size_t m);

/// M trainings differing only in seed: initialization, shuffling and dropout.
EnsembleSampler ensemble_train(const MlpModel& model_template, const LabeledDataset& data, std::size_t M,
                               const TrainConfig& cfg, LossKind kind = LossKind::softmax_ce);

/// K masked passes of a dropout model. Throws DomainError without dropout.
BmaResult mc_dropout_predict(const MlpModel& model, const Tensor& X, std::size_t K, std::uint64_t seed);

// ---- Bayes by backprop -----------------------------------------------------

inline constexpr double kMinSigma = 1e-6;

struct BbbConfig {
  std::size_t samples = 1;
  double prior_sigma = 1.0;
  double rho_init = -5.0;
};

/// KL(N(mu, diag sigma^2) || N(0, prior^2 I)) in closed form.
double gaussian_kl(std::span<const double> mu, std::span<const double> sigma, double prior_sigma = 1.0);
Var gaussian_kl(const Var& mu, const Var& sigma, double prior_sigma = 1.0);

/// sigma = max(softplus(rho), 1e-6).
Var bbb_sigma(const Var& rho);

/// KL + (n_total / |batch|) sum_batch NLL(mu + sigma * eps), averaged over
/// `cfg.samples` reparameterized draws. mu and rho are 1 x p nodes.
Var bbb_elbo(const MlpModel& model, const Var& mu, const Var& rho, const Tensor& X, const Tensor& targets,
             LossKind kind, std::size_t n_total, std::uint64_t seed, const BbbConfig& cfg = {});

/// Trains (mu, rho) from the template's parameters as mu. The objective is
/// divided by n_total so learning rates are on a per-sample scale.
GaussianDiagSampler train_bbb(const MlpModel& model_template, const LabeledDataset& data, const TrainConfig& train,
                              const BbbConfig& cfg = {}, LossKind kind = LossKind::softmax_ce);

// ---- SWAG ------------------------------------------------------------------

inline constexpr std::size_t kSwagMaxFullParams = 2000;

/// Moments of the last L snapshots (per epoch, or per recorded step with
/// `per_step`). Full covariance requires p <= 2000.
SwagSampler fit_swag(const CheckpointTrace& trace, std::size_t L, bool diag, bool per_step = false);

// ---- mode-connectivity curve ----------------------------------------------

std::vector<double> curve_param(std::span<const double> theta1, std::span<const double> theta2,
                                std::span<const double> phi, double t);
Var curve_param(const Var& theta1, const Var& theta2, const Var& phi, double t);

/// phi from the endpoint mean, trained on E_t L(theta_phi(t)) with one
/// t ~ U[0, 1] per step. Endpoints stay fixed.
std::vector<double> train_curve(const MlpModel& model_template, std::span<const double> theta1,
                                std::span<const double> theta2, const LabeledDataset& data, const TrainConfig& cfg,
                                LossKind kind = LossKind::softmax_ce);

// ---- Mahalanobis -----------------------------------------------------------

struct MahalanobisScorer {
  /// Class means, K x q.
  Tensor means;
  /// Tied covariance, q x q.
  Tensor cov;
  /// (cov + damping I)^-1.
  Tensor precision;
  double damping = 0.0;

  /// Squared distances M(x, k), n x K.
  Tensor distances(const Tensor& features) const;
};

/// Tied covariance (1/N) sum_k N_k Sigma_k. Default damping 1e-6 tr(Sigma)/q;
/// an explicit 0 on singular data throws NumericError.
MahalanobisScorer fit_mahalanobis(const Tensor& features, std::span<const int> labels, std::size_t classes,
                                  std::optional<double> damping = std::nullopt);

/// c(x) = -min_k M(x, k).
std::vector<double> score_mahalanobis(const MahalanobisScorer& s, const Tensor& features);

// ---- DUQ -------------------------------------------------------------------

struct DuqState {
  /// EMA sums m_k, K x q.
  Tensor sums;
  /// EMA counts N_k.
  std::vector<double> counts;
  double sigma = 0.1;
  double gamma = 0.999;

  static DuqState from_centroids(const Tensor& centroids, double sigma, double gamma);
  /// mu_k = m_k / N_k.
  Tensor centroids() const;
  void validate() const;
};

/// K_k = exp(-|f - mu_k|^2 / (2 sigma^2)), n x K; differentiable in features.
Var duq_scores(const DuqState& state, const Var& features);
Tensor duq_scores(const DuqState& state, const Tensor& features);

/// Mean over rows of the one-vs-rest BCE sum, with K clamped to [1e-12, 1 - 1e-12].
Var duq_loss(const Var& scores, std::span<const int> labels);

/// N_k <- gamma N_k + (1 - gamma) n_k, m_k <- gamma m_k + (1 - gamma) sum f.
/// Classes absent from the batch are left unchanged.
void duq_ema_update(DuqState& state, const Tensor& features, std::span<const int> labels);

struct DuqConfig {
  TrainConfig train;
  double sigma = 0.1;
  double gamma = 0.99;
};

struct DuqModel {
  /// Feature extractor (its output is the DUQ feature space).
  MlpModel features;
  DuqState state;
};

/// Joint training of the feature extractor on duq_loss with EMA centroid
/// updates after each step. Centroids start at the initial class means.
DuqModel duq_train(const MlpModel& feature_template, const LabeledDataset& data, const DuqConfig& cfg);

// ---- OOD evaluation --------------------------------------------------------

struct OodRow {
  std::string method;
  double auroc = 0.0;
  double aupr_in = 0.0;
  double aupr_out = 0.0;
};

/// In-distribution is the positive class; higher confidence means more ID.
OodRow ood_row(const std::string& method, std::span<const double> id_confidence,
               std::span<const double> ood_confidence);
std::string ood_csv(std::span<const OodRow> rows);

}  // namespace trustkit
