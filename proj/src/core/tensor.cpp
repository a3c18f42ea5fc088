#include "trustkit/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "trustkit/errors.hpp"

namespace trustkit {
namespace {

std::size_t element_count(const Tensor::Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void check_dims(const Tensor::Shape& shape) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + trustkit::shape_string(shape));
  }
}

}  // namespace

std::string shape_string(const Tensor::Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_dims(shape_);
  values_.assign(element_count(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  check_dims(shape_);
  if (values_.size() != element_count(shape_)) {
    throw ShapeError("tensor of shape " + trustkit::shape_string(shape_) + " cannot hold " +
                     std::to_string(values_.size()) + " values");
  }
}

Tensor Tensor::row(std::vector<double> values) {
  std::size_t n = values.size();
  return Tensor({1, n}, std::move(values));
}

Tensor Tensor::column(std::vector<double> values) {
  std::size_t n = values.size();
  return Tensor({n, 1}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  std::size_t r = rows.size();
  std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> v;
  v.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged rows in Tensor::from_rows");
    v.insert(v.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(v));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const { return shape_.size() == 2 ? shape_[0] : 1; }

std::size_t Tensor::cols() const { return shape_.empty() ? 1 : shape_.back(); }

Tensor Tensor::reshaped(Shape shape) const {
  return Tensor(std::move(shape), values_);
}

Tensor Tensor::as_matrix() const {
  if (shape_.size() == 2) return *this;
  if (shape_.size() > 2) throw ShapeError("cannot view rank-" + std::to_string(rank()) + " tensor as a matrix");
  return Tensor({1, values_.size()}, values_);
}

Tensor Tensor::row_slice(std::size_t r) const {
  std::size_t c = cols();
  if (r >= rows()) throw ShapeError("row index out of range");
  return Tensor({1, c}, std::vector<double>(values_.begin() + r * c, values_.begin() + (r + 1) * c));
}

Tensor Tensor::select_rows(std::span<const std::size_t> rows_idx) const {
  std::size_t c = cols();
  std::vector<double> out;
  out.reserve(rows_idx.size() * c);
  for (std::size_t r : rows_idx) {
    if (r >= rows()) throw ShapeError("row index out of range");
    out.insert(out.end(), values_.begin() + r * c, values_.begin() + (r + 1) * c);
  }
  return Tensor({rows_idx.size(), c}, std::move(out));
}

Tensor Tensor::transposed() const {
  std::size_t r = rows(), c = cols();
  Tensor t({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) t(j, i) = values_[i * c + j];
  return t;
}

bool Tensor::all_finite() const {
  for (double v : values_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_string() const { return trustkit::shape_string(shape_); }

}  // namespace trustkit
