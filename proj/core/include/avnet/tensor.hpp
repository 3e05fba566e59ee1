#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "avnet/errors.hpp"

namespace avnet {

enum class DType { float32, float64 };

std::string to_string(DType dtype);

template <typename T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::float32 : DType::float64;
}

// Calls fn.template operator()<T>() with T matching the runtime dtype.
template <typename Fn>
decltype(auto) dispatch(DType dtype, Fn&& fn) {
  if (dtype == DType::float32) return fn.template operator()<float>();
  return fn.template operator()<double>();
}

class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::int64_t> dims);
  explicit Shape(std::vector<std::int64_t> dims);

  std::size_t rank() const { return dims_.size(); }
  std::int64_t operator[](std::size_t axis) const { return dims_.at(axis); }
  std::int64_t numel() const;
  const std::vector<std::int64_t>& dims() const { return dims_; }

  bool operator==(const Shape& other) const = default;

  std::string str() const;

 private:
  std::vector<std::int64_t> dims_;
};

struct TensorImpl;

// Reference-counted handle to an n-dimensional row-major array. Copies share
// storage; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, DType dtype = DType::float32);
  static Tensor full(const Shape& shape, double value, DType dtype = DType::float32);
  static Tensor from_values(const Shape& shape, std::span<const double> values,
                            DType dtype = DType::float32);
  static Tensor from_values(const Shape& shape, std::initializer_list<double> values,
                            DType dtype = DType::float32);
  static Tensor scalar(double value, DType dtype = DType::float32);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::int64_t dim(std::size_t axis) const { return shape()[axis]; }
  std::size_t rank() const { return shape().rank(); }
  std::int64_t numel() const;
  DType dtype() const;

  template <typename T>
  std::span<T> data();
  template <typename T>
  std::span<const T> data() const;

  // Element access through double, independent of dtype. Slow; for tests and
  // small reductions.
  double at(std::int64_t flat_index) const;
  void set(std::int64_t flat_index, double value);
  double item() const;
  std::vector<double> to_vector() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool is_leaf() const;
  // Keeps the gradient of a non-leaf tensor after backward.
  Tensor& retain_grad();

  bool has_grad() const;
  Tensor grad() const;
  void clear_grad();

  Tensor clone() const;
  Tensor to(DType dtype) const;
  // Copies values from src (same shape, any dtype) into this tensor's storage.
  void copy_from(const Tensor& src);

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  bool bit_equal(const Tensor& other) const;

  TensorImpl* impl() const { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  friend struct TensorAccess;

  std::shared_ptr<TensorImpl> impl_;
};

struct TensorImpl {
  Shape shape;
  DType dtype = DType::float32;
  std::variant<std::vector<float>, std::vector<double>> storage;
  bool requires_grad = false;
  bool is_leaf = true;
  bool retain_grad = false;
  std::shared_ptr<TensorImpl> grad;
};

// Internal hook for the autodiff machinery.
struct TensorAccess {
  static Tensor wrap(std::shared_ptr<TensorImpl> impl) { return Tensor(std::move(impl)); }
  static const std::shared_ptr<TensorImpl>& handle(const Tensor& t) { return t.impl_; }
};

template <typename T>
std::span<T> Tensor::data() {
  auto* vec = std::get_if<std::vector<T>>(&impl_->storage);
  if (vec == nullptr) {
    throw std::invalid_argument("tensor dtype is " + to_string(impl_->dtype) + ", requested " +
                                to_string(dtype_of<T>()));
  }
  return {vec->data(), vec->size()};
}

template <typename T>
std::span<const T> Tensor::data() const {
  const auto* vec = std::get_if<std::vector<T>>(&impl_->storage);
  if (vec == nullptr) {
    throw std::invalid_argument("tensor dtype is " + to_string(impl_->dtype) + ", requested " +
                                to_string(dtype_of<T>()));
  }
  return {vec->data(), vec->size()};
}

}  // namespace avnet
