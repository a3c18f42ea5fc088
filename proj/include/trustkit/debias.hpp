#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trustkit/autodiff.hpp"
#include "trustkit/dataset.hpp"
#include "trustkit/mlp.hpp"
#include "trustkit/train.hpp"

namespace trustkit {

// ---- moment matching -------------------------------------------------------

/// Sum over domain pairs of |mu_a - mu_b|^2 + |Sigma_a - Sigma_b|_F^2, with
/// unbiased (n - 1) covariances. Each entry is one domain's n_a x q features.
Var moment_align_penalty(std::span<const Var> domains);
double moment_align_penalty(std::span<const Tensor> domains);

// ---- group DRO -------------------------------------------------------------

/// Adversarial distribution over groups.
struct GroupWeights {
  std::vector<double> q;

  static GroupWeights uniform(std::size_t m);
  std::size_t size() const { return q.size(); }
};

/// One online group DRO step on a batch drawn from group g:
///   q_g <- q_g exp(eta_q * loss), q <- q / sum(q),
///   theta <- theta - eta_theta (q_g grad loss + weight_decay theta)
/// using the updated q_g. Returns the batch loss before the update.
double gdro_step(GroupWeights& state, MlpModel& model, const Tensor& X, const Tensor& targets, std::size_t g,
                 double eta_q, double eta_theta, LossKind kind = LossKind::softmax_ce, double weight_decay = 0.0);

struct GdroConfig {
  double eta_q = 0.01;
  double eta_theta = 0.1;
  std::size_t steps = 2000;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  double weight_decay = 0.0;
  /// Non-default: draw groups in proportion to their size instead of uniformly.
  bool sample_by_size = false;
};

struct GroupReport {
  std::vector<double> accuracy;
  std::vector<std::size_t> count;
  double worst_group = 0.0;
  /// Accuracy over all rows.
  double average = 0.0;

  std::string to_csv(const std::string& label = "model") const;
};

/// Per-group accuracy of `model`. Groups with no rows are reported with
/// count 0 and excluded from the worst-group minimum.
GroupReport group_report(const MlpModel& model, const LabeledDataset& data);

struct GdroResult {
  MlpModel model;
  GroupWeights q;
  GroupReport report;
  /// ERM with the same initialization, step count and batch size.
  MlpModel erm_model;
  GroupReport erm_report;
};

/// Group DRO from `init`, evaluated on `test`, alongside an ERM baseline that
/// draws its batches uniformly from all rows.
GdroResult gdro_train(const MlpModel& init, const LabeledDataset& train, const LabeledDataset& test,
                      const GdroConfig& cfg);

/// Minibatches of `batch_size` rows drawn with replacement from all rows,
/// updated with plain SGD for `steps` steps (the ERM baseline of gdro_train).
void sampled_sgd(MlpModel& model, const LabeledDataset& data, const GdroConfig& cfg);

// ---- generalized cross-entropy and LfF --------------------------------------

/// Mean of (1 - p_y^q) / q over rows of a probability matrix.
Var gce_loss(const Var& probs, std::span<const int> labels, double q);
/// Same loss computed from logits through log_softmax.
Var gce_loss_logits(const Var& logits, std::span<const int> labels, double q);
/// Per-sample (1 - p_y^q)/q as an n x 1 column.
Var gce_per_sample(const Var& logits, std::span<const int> labels, double q);

/// W = loss_B / (loss_B + loss_D); 0/0 gives 0.5.
double lff_weight(double loss_b, double loss_d);
std::vector<double> lff_weights(std::span<const double> loss_b, std::span<const double> loss_d);

struct LffConfig {
  double q = 0.7;
  /// Step size on the batch sum of losses (not the mean).
  double lr = 0.005;
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  double weight_decay = 0.0;

  void validate() const;
};

struct ExpertPair {
  /// Biased model f_B (ReBias: f).
  MlpModel first;
  /// Debiased model f_D (ReBias: g).
  MlpModel second;
};

struct LffResult {
  ExpertPair models;
  /// Mean sample weight W per epoch.
  std::vector<double> epoch_mean_weight;
  double biased_accuracy = 0.0;
  double debiased_accuracy = 0.0;
};

/// Learning from failure: each step updates f_B on GCE, then f_D on the
/// W-weighted CE with W computed from the updated f_B and detached.
/// Accuracies are measured on `test`.
LffResult lff_train(const ExpertPair& init, const LabeledDataset& train, const LabeledDataset& test,
                    const LffConfig& cfg);

// ---- domain-adversarial training ------------------------------------------

struct DannConfig {
  TrainConfig train;
  /// Layers [0, split_layer) of the task model form the feature extractor.
  std::size_t split_layer = 1;
  /// lambda_t = lambda_max * t / (T - 1).
  double lambda_max = 1.0;
  double domain_lr = 0.1;
  /// Domain-head updates per task update.
  std::size_t domain_steps = 5;
};

struct DannResult {
  MlpModel model;
  MlpModel domain_head;
  std::vector<double> lambda;
  CheckpointTrace trace;
};

/// Alternating saddle-point training of E = L_y - lambda L_d. Each step first
/// descends the domain loss in the head (on detached features), then descends
/// E in the task model. With lambda 0 the task trajectory equals train_sgd.
DannResult dann_train(const MlpModel& init, const MlpModel& domain_head, const LabeledDataset& data,
                      std::span<const int> domains, const DannConfig& cfg);

/// Output of layers [0, layer) in eval mode.
Tensor features_at(const MlpModel& model, const Tensor& X, std::size_t layer);

// ---- HSIC and ReBias ------------------------------------------------------

struct HsicOptions {
  /// RBF widths; the median pairwise distance is used when unset.
  std::optional<double> sigma_u;
  std::optional<double> sigma_v;
};

/// Unbiased HSIC_1 with RBF kernels exp(-|a - b|^2 / (2 sigma^2)). Returns an
/// exact 0 when either argument has identical rows.
Var hsic_unbiased(const Var& U, const Var& V, const HsicOptions& options = {});
double hsic_unbiased(const Tensor& U, const Tensor& V, const HsicOptions& options = {});

/// Median of pairwise Euclidean distances between rows (1 when that is 0).
double median_pairwise_distance(const Tensor& X);

struct RebiasLosses {
  double loss_f = 0.0;
  double loss_g = 0.0;
  double hsic = 0.0;
};

struct RebiasConfig {
  double lambda = 1.0;
  double lr = 0.1;
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  /// Rows used for the per-epoch HSIC monitor.
  std::size_t monitor_rows = 256;
};

/// Representation used for HSIC: the penultimate activations, or the logits
/// for a single-layer model.
Var rebias_features(const MlpModel& model, const Var& theta, const Var& X);

/// min_f max_g L(f) - L(g) + lambda HSIC(f, g): one f step on
/// L(f) + lambda HSIC, then one g step on L(g) - lambda HSIC against the
/// updated f. Losses are reported before the updates.
RebiasLosses rebias_step(ExpertPair& pair, const Tensor& X, std::span<const int> labels, double lambda, double lr);

struct RebiasResult {
  ExpertPair models;
  /// HSIC on the monitor rows, before training and after each epoch.
  std::vector<double> epoch_hsic;
};

RebiasResult rebias_train(const ExpertPair& init, const LabeledDataset& data, const RebiasConfig& cfg);

// ---- input-gradient independence -------------------------------------------

struct GradIndepResult {
  Var loss;
  std::size_t pairs = 0;
  /// Pairs dropped because a model's input gradient has norm < 1e-12.
  std::size_t skipped = 0;
  std::vector<double> cos2;
};

/// Mean over unordered model pairs of cos^2 between flattened input
/// gradients of the logits. The loss is differentiable in every theta.
GradIndepResult grad_indep_loss(std::span<const MlpModel> models, std::span<const Var> thetas, const Tensor& X);

/// Gaussian mutual-information surrogate -0.5 log(1 - cos^2).
double mi_surrogate(double cos2);

}  // namespace trustkit
