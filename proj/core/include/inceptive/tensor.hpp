#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace inceptive {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array of doubles (last index fastest).
///
/// Every extent is positive and `size() == numel(shape())`. A default
/// constructed tensor is a rank-0 scalar holding 0.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor identity(std::size_t n);
  // Convenience for literals in tests and examples: a 2-D tensor from rows.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }

  // Extent of the last axis and the product of all leading axes, i.e. the
  // tensor viewed as a rows x cols matrix.
  std::size_t cols() const noexcept { return shape_.empty() ? 1 : shape_.back(); }
  std::size_t rows() const noexcept { return size() / cols(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  double* raw() noexcept { return data_.data(); }
  const double* raw() const noexcept { return data_.data(); }

  double& operator[](std::size_t flat) { return data_[flat]; }
  double operator[](std::size_t flat) const { return data_[flat]; }

  std::size_t offset(std::span<const std::size_t> index) const;
  std::size_t offset(std::initializer_list<std::size_t> index) const {
    return offset(std::span<const std::size_t>(index.begin(), index.size()));
  }
  double& at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
  double at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

  // Inverse of offset().
  std::vector<std::size_t> unravel(std::size_t flat) const;

  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  void fill(double value);
  bool all_finite() const noexcept;

  // Bitwise comparison of shape and payload.
  friend bool operator==(const Tensor& a, const Tensor& b);

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Elementwise helpers used by layers and tests.
double max_abs_diff(const Tensor& a, const Tensor& b);
void add_inplace(Tensor& target, const Tensor& other);
void scale_inplace(Tensor& target, double factor);

}  // namespace inceptive
