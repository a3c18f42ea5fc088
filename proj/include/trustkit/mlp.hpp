#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "trustkit/autodiff.hpp"
#include "trustkit/rng.hpp"

namespace trustkit {

enum class Activation { relu, tanh, softplus, identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct LayerSpec {
  std::size_t in = 0;
  std::size_t out = 0;
  Activation activation = Activation::identity;
  /// Inverted-dropout rate applied to this layer's input in train mode.
  double dropout = 0.0;
};

/// Dense feed-forward network with a flat parameter vector.
///
/// Parameter order is layer-major: for each layer the weight matrix
/// W [out x in] row-major, then the bias [out]. A layer computes
/// act(x W^T + b). With `heads` > 1 the final layer's outputs are split into
/// `heads` consecutive blocks of `classes()` columns.
class MlpModel {
 public:
  MlpModel() = default;
  MlpModel(std::vector<LayerSpec> layers, std::size_t heads = 1);

  /// Layers with widths dims[0] -> dims[1] -> ... ; `hidden` activation on all
  /// but the last layer, `output` on the last. Glorot-uniform weights, zero biases.
  static MlpModel create(const std::vector<std::size_t>& dims, Activation hidden, Activation output,
                         std::uint64_t seed, double dropout = 0.0, std::size_t heads = 1);

  void initialize(std::uint64_t seed);
  void reinitialize_layer(std::size_t layer, Rng& rng);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::vector<LayerSpec>& layers() { return layers_; }
  std::size_t num_layers() const { return layers_.size(); }
  std::size_t heads() const { return heads_; }
  std::size_t input_dim() const { return layers_.front().in; }
  std::size_t output_dim() const { return layers_.back().out; }
  std::size_t classes() const { return output_dim() / heads_; }

  std::size_t param_count() const { return param_count_; }
  std::size_t weight_offset(std::size_t layer) const { return offsets_.at(layer); }
  std::size_t bias_offset(std::size_t layer) const {
    return offsets_.at(layer) + layers_[layer].in * layers_[layer].out;
  }

  std::vector<double>& params() { return theta_; }
  const std::vector<double>& params() const { return theta_; }
  void set_params(std::vector<double> theta);

  bool has_dropout() const;
  /// True if any activation is relu (Hessian is zero almost everywhere).
  bool piecewise_linear() const;
  /// Eval-mode logits; one column per output unit.
  Tensor predict(const Tensor& X) const;

 private:
  void layout();

  std::vector<LayerSpec> layers_;
  std::size_t heads_ = 1;
  std::vector<std::size_t> offsets_;
  std::size_t param_count_ = 0;
  std::vector<double> theta_;
};

struct ForwardOptions {
  bool train_mode = false;
  std::uint64_t seed = 0;
  /// Run layers [first_layer, last_layer); the default runs the whole network.
  std::size_t first_layer = 0;
  std::size_t last_layer = std::numeric_limits<std::size_t>::max();
};

/// Forward pass with parameters taken from `theta` (a 1 x p node), so the
/// result can be differentiated with respect to parameters and inputs.
Var forward(const MlpModel& model, const Var& theta, const Var& X, const ForwardOptions& options = {});

/// Convenience: forward on a fresh recording of model.params() as a constant.
Tensor forward_values(const MlpModel& model, const Tensor& X, const ForwardOptions& options = {});

enum class LossKind { softmax_ce, bce_with_logits, mse };

std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& name);

/// Per-sample loss as an n x 1 column.
///  softmax_ce: targets n x 1 class ids; -log softmax(z)_y.
///  bce_with_logits: targets n x k in [0,1]; sum over columns of softplus(z) - y z.
///  mse: targets n x k; mean over columns of (z - y)^2.
Var per_sample_loss(const Var& logits, const Tensor& targets, LossKind kind);
/// Mean of per_sample_loss over the batch.
Var loss(const Var& logits, const Tensor& targets, LossKind kind);

/// Row-wise softmax of a logit matrix (max-subtracted).
Tensor softmax_rows(const Tensor& logits);
std::vector<std::size_t> argmax_rows(const Tensor& m);

}  // namespace trustkit
