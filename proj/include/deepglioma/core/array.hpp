#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace deepglioma::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Dense row-major array of 64-bit floats. Rank 0 (empty shape) is a scalar.
class Array {
 public:
  Array() = default;

  explicit Array(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

  Array(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size()) {
      throw std::invalid_argument("Array: shape " + shape_string(shape_) + " does not match " +
                                  std::to_string(data_.size()) + " values");
    }
  }

  static Array scalar(double v) { return Array(Shape{}, std::vector<double>{v}); }

  static Array vector(std::initializer_list<double> values) {
    return Array(Shape{values.size()}, std::vector<double>(values));
  }

  static Array matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
    return Array(Shape{rows, cols}, std::vector<double>(values));
  }

  static Array zeros_like(const Array& other) { return Array(other.shape_); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t dim(std::size_t axis) const {
    if (axis >= shape_.size()) throw std::out_of_range("Array::dim: axis out of range");
    return shape_[axis];
  }
  std::size_t rows() const { return dim(0); }
  std::size_t cols() const { return dim(1); }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  const std::vector<double>& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  double item() const {
    if (data_.size() != 1) {
      throw std::invalid_argument("Array::item: array of shape " + shape_string(shape_) +
                                  " is not a scalar");
    }
    return data_[0];
  }

  Array reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size()) {
      throw std::invalid_argument("Array::reshaped: cannot view " + shape_string(shape_) + " as " +
                                  shape_string(shape));
    }
    return Array(std::move(shape), data_);
  }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  Array& operator+=(const Array& other) {
    require_same_shape(other, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  void require_same_shape(const Array& other, std::string_view what) const {
    if (shape_ != other.shape_) {
      throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_string(shape_) +
                                  " vs " + shape_string(other.shape_));
    }
  }

  friend bool operator==(const Array& a, const Array& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

inline double max_abs_diff(const Array& a, const Array& b) {
  a.require_same_shape(b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace deepglioma::ad
