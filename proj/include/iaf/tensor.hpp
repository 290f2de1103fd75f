#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace iaf {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major float64 array. Feature maps use H x W x C layout;
/// batches of vectors use N x D.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* ptr() { return data_.data(); }
  const double* ptr() const { return data_.data(); }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Element of a rank-3 H x W x C tensor.
  double& at(std::size_t h, std::size_t w, std::size_t c) {
    return data_[(h * shape_[1] + w) * shape_[2] + c];
  }
  double at(std::size_t h, std::size_t w, std::size_t c) const {
    return data_[(h * shape_[1] + w) * shape_[2] + c];
  }

  void fill(double v);
  void reshape(Shape shape);
  Tensor reshaped(Shape shape) const;

  Tensor& operator+=(const Tensor& other);

  /// Throws ShapeError naming `what` when the shape differs from `expected`.
  void expect_shape(const Shape& expected, std::string_view what) const;

  /// Throws NonFiniteError if any element is NaN or infinite.
  void check_finite(std::string_view where) const;

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Concatenate two H x W x C maps along the channel axis.
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// Split a channel-concatenated gradient back into the two parts.
std::pair<Tensor, Tensor> split_channels(const Tensor& g, std::size_t channels_a);

}  // namespace iaf
