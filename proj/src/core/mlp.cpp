#include "trustkit/mlp.hpp"

#include <cmath>

#include "trustkit/errors.hpp"

namespace trustkit {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::softplus: return "softplus";
    case Activation::identity: return "identity";
  }
  return "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "softplus") return Activation::softplus;
  if (name == "identity" || name == "linear") return Activation::identity;
  throw ParseError("unknown activation '" + name + "'");
}

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::softmax_ce: return "softmax_ce";
    case LossKind::bce_with_logits: return "bce_with_logits";
    case LossKind::mse: return "mse";
  }
  return "mse";
}

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "softmax_ce" || name == "ce") return LossKind::softmax_ce;
  if (name == "bce_with_logits" || name == "bce") return LossKind::bce_with_logits;
  if (name == "mse") return LossKind::mse;
  throw ParseError("unknown loss kind '" + name + "'");
}

MlpModel::MlpModel(std::vector<LayerSpec> layers, std::size_t heads) : layers_(std::move(layers)), heads_(heads) {
  layout();
  theta_.assign(param_count_, 0.0);
}

void MlpModel::layout() {
  if (layers_.empty()) throw ShapeError("model needs at least one layer");
  if (heads_ == 0) throw ShapeError("head count must be at least 1");
  offsets_.clear();
  param_count_ = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const LayerSpec& s = layers_[l];
    if (s.in == 0 || s.out == 0) throw ShapeError("layer " + std::to_string(l) + " has a zero dimension");
    if (l > 0 && layers_[l - 1].out != s.in) {
      throw ShapeError("layer " + std::to_string(l) + " expects " + std::to_string(s.in) + " inputs but layer " +
                       std::to_string(l - 1) + " produces " + std::to_string(layers_[l - 1].out));
    }
    if (!(s.dropout >= 0.0 && s.dropout < 1.0)) throw DomainError("dropout rate must lie in [0, 1)");
    offsets_.push_back(param_count_);
    param_count_ += s.in * s.out + s.out;
  }
  if (layers_.back().out % heads_ != 0) throw ShapeError("output width is not divisible by the head count");
}

MlpModel MlpModel::create(const std::vector<std::size_t>& dims, Activation hidden, Activation output,
                          std::uint64_t seed, double dropout, std::size_t heads) {
  if (dims.size() < 2) throw ShapeError("need at least input and output widths");
  std::vector<LayerSpec> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    bool last = l + 2 == dims.size();
    layers.push_back({dims[l], dims[l + 1], last ? output : hidden, l == 0 ? 0.0 : dropout});
  }
  MlpModel m(std::move(layers), heads);
  m.initialize(seed);
  return m;
}

void MlpModel::initialize(std::uint64_t seed) {
  Rng root(seed);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Rng rng = root.split(l);
    reinitialize_layer(l, rng);
  }
}

void MlpModel::reinitialize_layer(std::size_t layer, Rng& rng) {
  const LayerSpec& s = layers_.at(layer);
  double a = std::sqrt(6.0 / static_cast<double>(s.in + s.out));
  std::size_t w = weight_offset(layer);
  for (std::size_t i = 0; i < s.in * s.out; ++i) theta_[w + i] = rng.uniform(-a, a);
  std::size_t b = bias_offset(layer);
  for (std::size_t i = 0; i < s.out; ++i) theta_[b + i] = 0.0;
}

void MlpModel::set_params(std::vector<double> theta) {
  if (theta.size() != param_count_) {
    throw ShapeError("parameter vector has length " + std::to_string(theta.size()) + ", model expects " +
                     std::to_string(param_count_));
  }
  theta_ = std::move(theta);
}

bool MlpModel::has_dropout() const {
  for (const auto& l : layers_)
    if (l.dropout > 0) return true;
  return false;
}

bool MlpModel::piecewise_linear() const {
  for (const auto& l : layers_)
    if (l.activation == Activation::relu) return true;
  return false;
}

Tensor MlpModel::predict(const Tensor& X) const { return forward_values(*this, X); }

namespace {

Var activate(const Var& z, Activation a) {
  switch (a) {
    case Activation::relu: return relu(z);
    case Activation::tanh: return tanh(z);
    case Activation::softplus: return softplus(z);
    case Activation::identity: return z;
  }
  return z;
}

}  // namespace

Var forward(const MlpModel& model, const Var& theta, const Var& X, const ForwardOptions& options) {
  if (theta.value().size() != model.param_count()) throw ShapeError("theta length does not match the model");
  const auto& layers = model.layers();
  std::size_t last = std::min(options.last_layer, layers.size());
  if (options.first_layer >= last) throw ShapeError("empty layer range in forward");
  if (X.cols() != layers[options.first_layer].in) {
    throw ShapeError("input has " + std::to_string(X.cols()) + " features, layer " +
                     std::to_string(options.first_layer) + " expects " + std::to_string(layers[options.first_layer].in));
  }
  Tape& tape = *X.tape();
  Var h = X;
  Rng root(options.seed);
  for (std::size_t l = options.first_layer; l < last; ++l) {
    const LayerSpec& s = layers[l];
    if (options.train_mode && s.dropout > 0.0) {
      Rng rng = root.split(l);
      double keep = 1.0 - s.dropout;
      Tensor mask({h.rows(), h.cols()});
      for (double& m : mask.data()) m = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
      h = mul(h, tape.constant(std::move(mask)));
    }
    Var W = slice_range(theta, model.weight_offset(l), s.out, s.in);
    Var b = slice_range(theta, model.bias_offset(l), 1, s.out);
    h = activate(add(matmul(h, transpose(W)), b), s.activation);
  }
  return h;
}

Tensor forward_values(const MlpModel& model, const Tensor& X, const ForwardOptions& options) {
  Tape tape;
  Tape::NoGradGuard guard(tape);
  Var theta = tape.constant(Tensor::row(model.params()));
  Var x = tape.constant(X);
  return forward(model, theta, x, options).value();
}

Var per_sample_loss(const Var& logits, const Tensor& targets_in, LossKind kind) {
  Tape& tape = *logits.tape();
  const std::size_t n = logits.rows(), k = logits.cols();
  Tensor targets = targets_in.as_matrix();
  if (targets.rows() != n) {
    throw ShapeError("targets have " + std::to_string(targets.rows()) + " rows, logits have " + std::to_string(n));
  }
  switch (kind) {
    case LossKind::softmax_ce: {
      if (targets.cols() != 1) throw ShapeError("softmax_ce expects one class id per row");
      Tensor onehot({n, k});
      for (std::size_t i = 0; i < n; ++i) {
        double y = targets(i, 0);
        if (!(y >= 0) || y >= static_cast<double>(k) || std::floor(y) != y) {
          throw DomainError("class target " + std::to_string(y) + " outside {0.." + std::to_string(k - 1) + "}");
        }
        onehot(i, static_cast<std::size_t>(y)) = 1.0;
      }
      return neg(sum_rows(mul(log_softmax(logits), tape.constant(std::move(onehot)))));
    }
    case LossKind::bce_with_logits: {
      if (targets.cols() != k) throw ShapeError("bce_with_logits targets must match the logit shape");
      return sum_rows(sub(softplus(logits), mul(logits, tape.constant(std::move(targets)))));
    }
    case LossKind::mse: {
      if (targets.cols() != k) throw ShapeError("mse targets must match the output shape");
      return scale(sum_rows(square(sub(logits, tape.constant(std::move(targets))))), 1.0 / static_cast<double>(k));
    }
  }
  throw DomainError("unknown loss kind");
}

Var loss(const Var& logits, const Tensor& targets, LossKind kind) { return mean(per_sample_loss(logits, targets, kind)); }

Tensor softmax_rows(const Tensor& logits_in) {
  Tensor logits = logits_in.as_matrix();
  Tensor out({logits.rows(), logits.cols()});
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    double m = logits(i, 0);
    for (std::size_t j = 1; j < logits.cols(); ++j) m = std::max(m, logits(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < logits.cols(); ++j) s += (out(i, j) = std::exp(logits(i, j) - m));
    for (std::size_t j = 0; j < logits.cols(); ++j) out(i, j) /= s;
  }
  return out;
}

std::vector<std::size_t> argmax_rows(const Tensor& m_in) {
  Tensor m = m_in.as_matrix();
  std::vector<std::size_t> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < m.cols(); ++j)
      if (m(i, j) > m(i, best)) best = j;
    out[i] = best;
  }
  return out;
}

}  // namespace trustkit
