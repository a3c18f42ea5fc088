#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace trustkit {

/// Dense row-major array of 64-bit reals.
///
/// Storage is n-dimensional, but every differentiable operation works on
/// matrices: rank-0 and rank-1 tensors are viewed as a single row when placed
/// on a tape.
class Tensor {
 public:
  using Shape = std::vector<std::size_t>;

  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }
  static Tensor full(std::size_t rows, std::size_t cols, double v) { return Tensor({rows, cols}, v); }
  static Tensor scalar(double v) { return Tensor({1, 1}, std::vector<double>{v}); }
  static Tensor row(std::vector<double> values);
  static Tensor column(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  /// Leading dimension for rank 2, 1 otherwise.
  std::size_t rows() const;
  /// Trailing dimension (1 for rank 0).
  std::size_t cols() const;

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::vector<double>& data() { return values_; }
  const std::vector<double>& data() const { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  /// Same values under a new shape; throws ShapeError on size mismatch.
  Tensor reshaped(Shape shape) const;
  /// Rank-2 view of this tensor (rank 0/1 become a single row).
  Tensor as_matrix() const;

  Tensor row_slice(std::size_t r) const;
  Tensor select_rows(std::span<const std::size_t> rows) const;
  Tensor transposed() const;

  bool all_finite() const;
  bool operator==(const Tensor& other) const = default;

  std::string shape_string() const;

 private:
  Shape shape_;
  std::vector<double> values_;
};

std::string shape_string(const Tensor::Shape& shape);

}  // namespace trustkit
