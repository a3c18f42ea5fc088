#include "trustkit/probe.hpp"

#include <cmath>
#include <numeric>

#include "trustkit/dataset.hpp"
#include "trustkit/errors.hpp"
#include "trustkit/rng.hpp"
#include "trustkit/train.hpp"

namespace trustkit {

ProbeResult fit_linear_probe(const Tensor& features, std::span<const int> labels, std::size_t classes,
                             const ProbeConfig& cfg) {
  const std::size_t n = features.rows(), q = features.cols();
  if (labels.size() != n) throw ShapeError("probe: label count differs from feature rows");
  if (classes < 2) throw DomainError("probe needs at least two classes");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng(cfg.seed).split(7);
  rng.shuffle(std::span<std::size_t>(order));
  std::size_t n_test = static_cast<std::size_t>(std::floor(cfg.holdout * static_cast<double>(n)));
  if (n_test >= n) throw DomainError("probe holdout leaves no training rows");
  std::vector<std::size_t> train_rows(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::vector<std::size_t> test_rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));

  std::vector<double> mean(q, 0.0), sd(q, 0.0);
  for (std::size_t r : train_rows)
    for (std::size_t j = 0; j < q; ++j) mean[j] += features(r, j);
  for (double& m : mean) m /= static_cast<double>(train_rows.size());
  for (std::size_t r : train_rows)
    for (std::size_t j = 0; j < q; ++j) sd[j] += (features(r, j) - mean[j]) * (features(r, j) - mean[j]);
  for (double& s : sd) {
    s = std::sqrt(s / static_cast<double>(train_rows.size()));
    if (s < 1e-12) s = 1.0;
  }

  LabeledDataset train;
  train.X = Tensor({train_rows.size(), q});
  train.num_classes = classes;
  for (std::size_t i = 0; i < train_rows.size(); ++i) {
    for (std::size_t j = 0; j < q; ++j) train.X(i, j) = (features(train_rows[i], j) - mean[j]) / sd[j];
    train.labels.push_back(labels[train_rows[i]]);
  }
  MlpModel model = MlpModel::create({q, classes}, Activation::identity, Activation::identity, cfg.seed);
  TrainConfig tc;
  tc.lr = LrSchedule::constant(cfg.lr);
  tc.batch_size = cfg.batch_size;
  tc.epochs = cfg.epochs;
  tc.seed = cfg.seed;
  tc.weight_decay = cfg.weight_decay;
  tc.checkpoint_every = 1u << 30;
  train_sgd(model, train, tc, LossKind::softmax_ce);

  // Fold standardization into the weights: W' = W / sd, b' = b - W' mean.
  auto& th = model.params();
  for (std::size_t k = 0; k < classes; ++k) {
    double shift = 0;
    for (std::size_t j = 0; j < q; ++j) {
      th[k * q + j] /= sd[j];
      shift += th[k * q + j] * mean[j];
    }
    th[model.bias_offset(0) + k] -= shift;
  }

  ProbeResult res{model, 0.0, 0.0};
  auto acc_on = [&](const std::vector<std::size_t>& rows) {
    Tensor logits = model.predict(features.select_rows(rows));
    std::vector<int> y;
    for (std::size_t r : rows) y.push_back(labels[r]);
    return accuracy(logits, y);
  };
  res.train_accuracy = acc_on(train_rows);
  res.test_accuracy = test_rows.empty() ? res.train_accuracy : acc_on(test_rows);
  return res;
}

}  // namespace trustkit
