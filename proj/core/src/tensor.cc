#include "adaptvc/tensor.h"

#include <cmath>
#include <sstream>

#include "adaptvc/error.h"

namespace adaptvc {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

int64_t shape_size(const Shape& shape) {
  int64_t n = 1;
  for (int64_t e : shape) n *= e;
  return n;
}

namespace {

void validate_shape(const Shape& shape) {
  for (int64_t e : shape) {
    if (e <= 0) {
      throw std::invalid_argument("tensor extents must be positive, got " +
                                  shape_string(shape));
    }
  }
}

}  // namespace

Tensor::Tensor(Shape shape, Scalar fill) : shape_(std::move(shape)) {
  validate_shape(shape_);
  values_.assign(static_cast<size_t>(shape_size(shape_)), fill);
}

Tensor::Tensor(Shape shape, std::vector<Scalar> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  validate_shape(shape_);
  if (static_cast<int64_t>(values_.size()) != shape_size(shape_)) {
    throw std::invalid_argument("value count " + std::to_string(values_.size()) +
                                " does not match shape " + shape_string(shape_));
  }
}

Tensor Tensor::matrix(int64_t rows, int64_t cols,
                      std::initializer_list<Scalar> values) {
  return Tensor({rows, cols}, std::vector<Scalar>(values));
}

Tensor Tensor::vector(std::initializer_list<Scalar> values) {
  return Tensor({static_cast<int64_t>(values.size())}, std::vector<Scalar>(values));
}

int64_t Tensor::dim(int64_t axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) {
    throw std::out_of_range("axis out of range for shape " + shape_string(shape_));
  }
  return shape_[static_cast<size_t>(axis)];
}

int64_t Tensor::rows() const {
  if (rank() == 2) return shape_[0];
  if (rank() <= 1) return 1;
  throw std::invalid_argument("rows() on tensor of shape " + shape_string(shape_));
}

int64_t Tensor::cols() const {
  if (rank() == 2) return shape_[1];
  if (rank() == 1) return shape_[0];
  if (rank() == 0) return 1;
  throw std::invalid_argument("cols() on tensor of shape " + shape_string(shape_));
}

Scalar Tensor::item() const {
  if (values_.size() != 1) {
    throw std::invalid_argument("item() on tensor of shape " + shape_string(shape_));
  }
  return values_[0];
}

std::span<Scalar> Tensor::row(int64_t r) {
  const int64_t c = cols();
  return std::span<Scalar>(values_).subspan(static_cast<size_t>(r * c),
                                            static_cast<size_t>(c));
}

std::span<const Scalar> Tensor::row(int64_t r) const {
  const int64_t c = cols();
  return std::span<const Scalar>(values_).subspan(static_cast<size_t>(r * c),
                                                  static_cast<size_t>(c));
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != size()) {
    throw std::invalid_argument("cannot reshape " + shape_string(shape_) + " to " +
                                shape_string(shape));
  }
  return Tensor(std::move(shape), values_);
}

bool Tensor::all_finite() const {
  for (Scalar v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (other.size() != size()) {
    throw std::invalid_argument("shape mismatch in +=: " + shape_string(shape_) +
                                " vs " + shape_string(other.shape_));
  }
  for (size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

Tensor& Tensor::operator*=(Scalar s) {
  for (Scalar& v : values_) v *= s;
  return *this;
}

}  // namespace adaptvc
