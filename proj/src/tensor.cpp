#include "iaf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace iaf {

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_)) {
    throw ShapeError("Tensor: " + std::to_string(data_.size()) + " values for shape " +
                     shape_string(shape_));
  }
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::reshape(Shape shape) {
  if (shape_numel(shape) != data_.size()) {
    throw ShapeError("reshape: cannot view " + shape_string(shape_) + " as " +
                     shape_string(shape));
  }
  shape_ = std::move(shape);
}

Tensor Tensor::reshaped(Shape shape) const {
  Tensor t = *this;
  t.reshape(std::move(shape));
  return t;
}

Tensor& Tensor::operator+=(const Tensor& other) {
  other.expect_shape(shape_, "tensor accumulate");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

void Tensor::expect_shape(const Shape& expected, std::string_view what) const {
  if (shape_ != expected) {
    throw ShapeError(std::string(what) + ": expected shape " + shape_string(expected) +
                     ", got " + shape_string(shape_));
  }
}

void Tensor::check_finite(std::string_view where) const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw NonFiniteError(std::string(where) + ": non-finite value at flat index " +
                           std::to_string(i));
    }
  }
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(1) != b.dim(1)) {
    throw ShapeError("concat_channels: incompatible maps " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  const std::size_t hw = a.dim(0) * a.dim(1), ca = a.dim(2), cb = b.dim(2);
  Tensor out({a.dim(0), a.dim(1), ca + cb});
  for (std::size_t p = 0; p < hw; ++p) {
    std::copy_n(a.ptr() + p * ca, ca, out.ptr() + p * (ca + cb));
    std::copy_n(b.ptr() + p * cb, cb, out.ptr() + p * (ca + cb) + ca);
  }
  return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& g, std::size_t channels_a) {
  const std::size_t h = g.dim(0), w = g.dim(1), c = g.dim(2);
  if (channels_a > c) throw ShapeError("split_channels: split point beyond channel count");
  const std::size_t cb = c - channels_a;
  Tensor a({h, w, channels_a}), b({h, w, cb});
  for (std::size_t p = 0; p < h * w; ++p) {
    std::copy_n(g.ptr() + p * c, channels_a, a.ptr() + p * channels_a);
    std::copy_n(g.ptr() + p * c + channels_a, cb, b.ptr() + p * cb);
  }
  return {std::move(a), std::move(b)};
}

}  // namespace iaf
