#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "geoseg/errors.hpp"

namespace geoseg::num {

inline std::string shape_str(const std::vector<std::size_t>& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

// Dense row-major tensor. Scalar type selects the precision mode:
// double for the verification suite, float for training.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(count(shape_), T(0)) {}

  Tensor(std::vector<std::size_t> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (count(shape_) != data_.size()) {
      throw ShapeError("tensor: shape " + shape_str(shape_) + " does not match data length " +
                       std::to_string(data_.size()));
    }
  }

  static Tensor full(std::vector<std::size_t> shape, T v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
  }

  static Tensor scalar(T v) { return Tensor({1}, {v}); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  std::size_t numel() const { return data_.size(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // 2D accessors (row-major)
  std::size_t rows() const { return shape_.size() >= 1 ? shape_[0] : 0; }
  std::size_t cols() const { return shape_.size() >= 2 ? shape_[1] : 1; }
  T& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  void fill(T v) {
    for (auto& x : data_) x = v;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  static std::size_t count(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return s.empty() ? 0 : n;
  }

  std::vector<std::size_t> shape_;
  std::vector<T> data_;
};

// Parameter with its accumulated cotangent. grad is zeroed before each
// backward pass and always matches value's shape.
template <typename T>
struct DualTensor {
  Tensor<T> value;
  Tensor<T> grad;

  DualTensor() = default;
  explicit DualTensor(Tensor<T> v) : value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(T(0)); }
};

// Tolerance constants per precision mode.
template <typename T>
struct Tol;

template <>
struct Tol<double> {
  static constexpr double close = 1e-9;
  static constexpr double grad = 1e-4;
  static constexpr double prob_clamp = 1e-7;
};

template <>
struct Tol<float> {
  static constexpr float close = 1e-5f;
  static constexpr float grad = 1e-2f;
  static constexpr float prob_clamp = 1e-7f;
};

template <typename T>
inline void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

}  // namespace geoseg::num
