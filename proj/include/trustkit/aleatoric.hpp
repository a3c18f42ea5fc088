#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "trustkit/autodiff.hpp"
#include "trustkit/dataset.hpp"
#include "trustkit/mlp.hpp"
#include "trustkit/train.hpp"

namespace trustkit {

/// Isotropic Gaussian head: mean n x d and log-variance n x 1.
struct GaussianHeadOutput {
  Var mu;
  Var log_var;
};

/// Splits a model output of width d + 1 into (mu, log sigma^2).
GaussianHeadOutput split_gaussian_head(const Var& out);

/// Mean over rows of |y - mu|^2 / (2 sigma^2) + (d/2) log sigma^2.
Var hetero_nll(const GaussianHeadOutput& out, const Tensor& y);

/// Trains a Gaussian-head regression model (output width d + 1) on hetero_nll.
CheckpointTrace train_gaussian_head(MlpModel& model, const LabeledDataset& data, const TrainConfig& cfg);

struct KendallResult {
  /// Mean prediction over passes, n x d.
  Tensor mean;
  /// c_al: mean of the per-pass sigma^2, n x 1.
  Tensor aleatoric;
  /// c_ep: per-dimension variance of the per-pass means, n x d (empty when not requested).
  Tensor epistemic;
};

/// Decomposition from logged passes (mu_t n x d, sigma^2_t n x 1).
KendallResult kendall_from_passes(std::span<const Tensor> mus, std::span<const Tensor> variances,
                                  bool epistemic = true);

/// T stochastic passes of a Gaussian-head model; pass t uses mask seed
/// mix_seed(seed, t). Without dropout every pass is identical.
KendallResult kendall_uncertainties(const MlpModel& model, const Tensor& X, std::size_t T, std::uint64_t seed,
                                    bool epistemic = true);

/// M head predictions stacked as consecutive blocks of width d, with a
/// shared fixed variance.
struct ExpertOutputs {
  Var outputs;
  std::size_t heads = 1;
  double sigma2 = 1.0;

  std::size_t dim() const;
  Var head(std::size_t m) const;
};

/// Per-head squared error |y - f_m|^2 as an n x M matrix.
Var head_sq_errors(const ExpertOutputs& e, const Tensor& y);

struct MogResult {
  Var loss;
  /// Responsibilities w (n x M), detached from the tape.
  Tensor weights;
};

/// Mean over rows of -log((1/M) sum_m N(y; f_m, sigma^2 I)), computed with
/// log-sum-exp and without the 2 pi constant.
MogResult mog_nll(const ExpertOutputs& e, const Tensor& y);

struct WtaResult {
  Var loss;
  /// Winning head per row (lowest index on ties).
  std::vector<std::size_t> winner;
  /// One-hot n x M mask of the winners.
  Tensor mask;
};

/// Mean over rows of min_m losses(i, m); only the winner carries gradient.
WtaResult wta_from_losses(const Var& losses);
/// WTA on squared errors.
WtaResult wta_loss(const ExpertOutputs& e, const Tensor& y);

struct CatchupResult {
  /// sum_y min_c l(f_c, y), averaged over rows.
  Var div;
  /// (1/M) max_c min_y l(f_c, y), averaged over rows.
  Var catchup;
  /// div + beta * catchup.
  Var combined;
};

/// `label_sets[i]` holds the admissible targets of row i (L_i x d); l is the
/// squared error.
CatchupResult catchup_loss(const ExpertOutputs& e, std::span<const Tensor> label_sets, double beta = 1.0);

/// Breaks head symmetry before multi-head training: scales the last layer's
/// weights by `weight_scale` and sets head m's bias to the (m + 0.5) / M
/// quantile of each target column. Without it heads can trade roles across
/// the input space and meet at a shared value where they cross.
void init_heads_at_quantiles(MlpModel& model, const Tensor& targets, double weight_scale = 0.1);

enum class MultiHeadLoss { wta, mog };

/// Trains a multi-head regression model on WTA or MoG over its heads.
CheckpointTrace train_multihead(MlpModel& model, const LabeledDataset& data, const TrainConfig& cfg,
                                MultiHeadLoss kind, double sigma2 = 1.0);

struct UncertaintyBin {
  double x_lo = 0.0;
  double x_hi = 0.0;
  std::size_t count = 0;
  double true_sigma = 0.0;
  double pred_sigma = 0.0;
};

/// Equal-width bins over [min x, max x] of mean true and predicted sigma.
/// Empty bins are dropped.
std::vector<UncertaintyBin> uncertainty_bins(std::span<const double> x, std::span<const double> true_sigma,
                                             std::span<const double> pred_sigma, std::size_t bins);
std::string uncertainty_csv(std::span<const UncertaintyBin> bins);

}  // namespace trustkit
