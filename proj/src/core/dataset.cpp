#include "trustkit/dataset.hpp"

#include <algorithm>
#include <numeric>

#include "trustkit/errors.hpp"

namespace trustkit {

std::size_t LabeledDataset::num_groups() const {
  if (groups.empty()) return 0;
  return static_cast<std::size_t>(*std::max_element(groups.begin(), groups.end())) + 1;
}

void LabeledDataset::validate() const {
  const std::size_t n = size();
  if (!labels.empty() && labels.size() != n) throw ShapeError("label column length differs from row count");
  if (!targets.empty() && targets.rows() != n) throw ShapeError("target rows differ from row count");
  if (!groups.empty() && groups.size() != n) throw ShapeError("group column length differs from row count");
  if (!bias.empty() && bias.size() != n) throw ShapeError("bias column length differs from row count");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) throw DomainError("class label outside {0..K-1}");
  }
  for (int g : groups)
    if (g < 0) throw DomainError("negative group id");
}

std::vector<std::size_t> LabeledDataset::all_rows() const {
  std::vector<std::size_t> r(size());
  std::iota(r.begin(), r.end(), std::size_t{0});
  return r;
}

Tensor LabeledDataset::features(std::span<const std::size_t> rows) const { return X.select_rows(rows); }

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> rows) const {
  LabeledDataset out;
  out.num_classes = num_classes;
  out.meta = meta;
  if (rows.empty()) return out;
  out.X = X.select_rows(rows);
  auto pick = [&](const std::vector<int>& col) {
    std::vector<int> v;
    if (col.empty()) return v;
    v.reserve(rows.size());
    for (std::size_t r : rows) v.push_back(col.at(r));
    return v;
  };
  out.labels = pick(labels);
  out.groups = pick(groups);
  out.bias = pick(bias);
  if (!targets.empty()) out.targets = targets.select_rows(rows);
  return out;
}

Tensor LabeledDataset::loss_targets(std::span<const std::size_t> rows, LossKind kind) const {
  if (kind == LossKind::mse && !targets.empty()) return targets.select_rows(rows);
  if (labels.empty()) throw DomainError("dataset has no labels for this loss kind");
  Tensor t({rows.size(), 1});
  for (std::size_t i = 0; i < rows.size(); ++i) t(i, 0) = labels.at(rows[i]);
  return t;
}

Tensor LabeledDataset::loss_targets(LossKind kind) const {
  auto rows = all_rows();
  return loss_targets(rows, kind);
}

LabeledDataset concat(const LabeledDataset& a, const LabeledDataset& b) {
  if (a.size() == 0) return b;
  if (b.size() == 0) return a;
  if (a.dim() != b.dim()) throw ShapeError("concat: feature widths differ");
  LabeledDataset out = a;
  std::vector<double> x = a.X.data();
  x.insert(x.end(), b.X.data().begin(), b.X.data().end());
  out.X = Tensor({a.size() + b.size(), a.dim()}, std::move(x));
  auto join = [](std::vector<int> u, const std::vector<int>& v) {
    u.insert(u.end(), v.begin(), v.end());
    return u;
  };
  out.labels = join(a.labels, b.labels);
  out.groups = join(a.groups, b.groups);
  out.bias = join(a.bias, b.bias);
  if (!a.targets.empty()) {
    std::vector<double> t = a.targets.data();
    t.insert(t.end(), b.targets.data().begin(), b.targets.data().end());
    out.targets = Tensor({a.size() + b.size(), a.targets.cols()}, std::move(t));
  }
  out.num_classes = std::max(a.num_classes, b.num_classes);
  out.validate();
  return out;
}

double accuracy(const Tensor& logits, std::span<const int> labels) {
  if (labels.empty()) return 0.0;
  auto pred = argmax_rows(logits);
  if (pred.size() != labels.size()) throw ShapeError("accuracy: prediction and label counts differ");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    // Single-logit models are binary with a decision threshold at 0.
    std::size_t p = logits.cols() == 1 ? (logits(i, 0) > 0 ? 1 : 0) : pred[i];
    hits += static_cast<int>(p) == labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double accuracy(const MlpModel& model, const LabeledDataset& data) {
  return accuracy(model.predict(data.X), data.labels);
}

}  // namespace trustkit
