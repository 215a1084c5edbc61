#include "ppkt/dense_array.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ppkt {

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_product(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

DenseArray::DenseArray(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

DenseArray::DenseArray(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw ShapeError("DenseArray: shape " + shape_str(shape_) + " needs " +
                     std::to_string(shape_product(shape_)) + " values, got " +
                     std::to_string(data_.size()));
  }
}

std::size_t DenseArray::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("DenseArray: axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(shape_));
  }
  return shape_[axis];
}

std::span<double> DenseArray::row(std::size_t i) {
  const std::size_t stride = shape_.empty() || shape_[0] == 0 ? 0 : data_.size() / shape_[0];
  return std::span<double>(data_).subspan(i * stride, stride);
}

std::span<const double> DenseArray::row(std::size_t i) const {
  const std::size_t stride = shape_.empty() || shape_[0] == 0 ? 0 : data_.size() / shape_[0];
  return std::span<const double>(data_).subspan(i * stride, stride);
}

DenseArray DenseArray::reshaped(Shape shape) const {
  if (shape_product(shape) != data_.size()) {
    throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(shape));
  }
  return DenseArray(std::move(shape), data_);
}

void DenseArray::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool DenseArray::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_shape(const DenseArray& a, const Shape& expected, const char* what) {
  if (a.shape() != expected) {
    throw ShapeError(std::string(what) + ": expected shape " + shape_str(expected) + ", got " +
                     shape_str(a.shape()));
  }
}

void require_rank(const DenseArray& a, std::size_t rank, const char* what) {
  if (a.ndim() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                     shape_str(a.shape()));
  }
}

}  // namespace ppkt
