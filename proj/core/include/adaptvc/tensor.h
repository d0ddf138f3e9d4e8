#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace adaptvc {

using Scalar = double;
using Shape = std::vector<int64_t>;

std::string shape_string(const Shape& shape);
int64_t shape_size(const Shape& shape);

// Dense row-major array. Rank 0 is a scalar holding one value.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Scalar fill = 0);
  Tensor(Shape shape, std::vector<Scalar> values);

  static Tensor scalar(Scalar v) { return Tensor(Shape{}, std::vector<Scalar>{v}); }
  static Tensor matrix(int64_t rows, int64_t cols,
                       std::initializer_list<Scalar> values);
  static Tensor vector(std::initializer_list<Scalar> values);
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }

  const Shape& shape() const { return shape_; }
  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
  int64_t dim(int64_t axis) const;
  int64_t size() const { return static_cast<int64_t>(values_.size()); }
  bool empty() const { return values_.empty(); }

  // Rank-2 accessors. A rank-1 tensor is viewed as a single row.
  int64_t rows() const;
  int64_t cols() const;

  Scalar* data() { return values_.data(); }
  const Scalar* data() const { return values_.data(); }
  std::span<Scalar> values() { return values_; }
  std::span<const Scalar> values() const { return values_; }
  std::vector<Scalar>& storage() { return values_; }
  const std::vector<Scalar>& storage() const { return values_; }

  Scalar& operator[](int64_t i) { return values_[static_cast<size_t>(i)]; }
  Scalar operator[](int64_t i) const { return values_[static_cast<size_t>(i)]; }
  Scalar& at(int64_t r, int64_t c) { return values_[static_cast<size_t>(r * cols() + c)]; }
  Scalar at(int64_t r, int64_t c) const {
    return values_[static_cast<size_t>(r * cols() + c)];
  }
  Scalar item() const;

  std::span<Scalar> row(int64_t r);
  std::span<const Scalar> row(int64_t r) const;

  Tensor reshaped(Shape shape) const;
  bool all_finite() const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(Scalar s);

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  Shape shape_;
  std::vector<Scalar> values_;
};

}  // namespace adaptvc
