#include "avnet/tensor.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

namespace avnet {

std::string to_string(DType dtype) { return dtype == DType::float32 ? "float32" : "float64"; }

Shape::Shape(std::initializer_list<std::int64_t> dims) : Shape(std::vector<std::int64_t>(dims)) {}

Shape::Shape(std::vector<std::int64_t> dims) : dims_(std::move(dims)) {
  for (auto d : dims_) {
    if (d < 0) throw ShapeError("negative dimension in shape " + str());
  }
}

std::int64_t Shape::numel() const {
  std::int64_t n = 1;
  for (auto d : dims_) n *= d;
  return n;
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) os << 'x';
    os << dims_[i];
  }
  os << ']';
  return os.str();
}

namespace {

std::shared_ptr<TensorImpl> make_impl(const Shape& shape, DType dtype) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape;
  impl->dtype = dtype;
  const auto n = static_cast<std::size_t>(shape.numel());
  if (dtype == DType::float32) {
    impl->storage = std::vector<float>(n, 0.0f);
  } else {
    impl->storage = std::vector<double>(n, 0.0);
  }
  return impl;
}

void require_defined(const TensorImpl* impl) {
  if (impl == nullptr) throw std::logic_error("operation on an undefined tensor");
}

}  // namespace

Tensor Tensor::zeros(const Shape& shape, DType dtype) { return Tensor(make_impl(shape, dtype)); }

Tensor Tensor::full(const Shape& shape, double value, DType dtype) {
  Tensor t = zeros(shape, dtype);
  dispatch(dtype, [&]<typename T>() {
    auto d = t.data<T>();
    std::fill(d.begin(), d.end(), static_cast<T>(value));
  });
  return t;
}

Tensor Tensor::from_values(const Shape& shape, std::span<const double> values, DType dtype) {
  if (static_cast<std::int64_t>(values.size()) != shape.numel()) {
    throw ShapeError("shape " + shape.str() + " needs " + std::to_string(shape.numel()) +
                     " values, got " + std::to_string(values.size()));
  }
  Tensor t = zeros(shape, dtype);
  dispatch(dtype, [&]<typename T>() {
    auto d = t.data<T>();
    std::transform(values.begin(), values.end(), d.begin(),
                   [](double v) { return static_cast<T>(v); });
  });
  return t;
}

Tensor Tensor::from_values(const Shape& shape, std::initializer_list<double> values, DType dtype) {
  return from_values(shape, std::span<const double>(values.begin(), values.size()), dtype);
}

Tensor Tensor::scalar(double value, DType dtype) { return full(Shape{}, value, dtype); }

const Shape& Tensor::shape() const {
  require_defined(impl_.get());
  return impl_->shape;
}

std::int64_t Tensor::numel() const { return shape().numel(); }

DType Tensor::dtype() const {
  require_defined(impl_.get());
  return impl_->dtype;
}

double Tensor::at(std::int64_t flat_index) const {
  return dispatch(dtype(), [&]<typename T>() -> double {
    return static_cast<double>(data<T>()[static_cast<std::size_t>(flat_index)]);
  });
}

void Tensor::set(std::int64_t flat_index, double value) {
  dispatch(dtype(), [&]<typename T>() {
    data<T>()[static_cast<std::size_t>(flat_index)] = static_cast<T>(value);
  });
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on tensor of shape " + shape().str());
  }
  return at(0);
}

std::vector<double> Tensor::to_vector() const {
  return dispatch(dtype(), [&]<typename T>() {
    auto d = data<T>();
    return std::vector<double>(d.begin(), d.end());
  });
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  require_defined(impl_.get());
  if (!impl_->is_leaf) throw AutodiffError("requires_grad can only be set on leaf tensors");
  impl_->requires_grad = flag;
  return *this;
}

bool Tensor::is_leaf() const { return impl_ && impl_->is_leaf; }

Tensor& Tensor::retain_grad() {
  require_defined(impl_.get());
  impl_->retain_grad = true;
  return *this;
}

bool Tensor::has_grad() const { return impl_ && impl_->grad != nullptr; }

Tensor Tensor::grad() const {
  if (!has_grad()) return Tensor();
  return Tensor(impl_->grad);
}

void Tensor::clear_grad() {
  if (impl_) impl_->grad.reset();
}

Tensor Tensor::clone() const {
  require_defined(impl_.get());
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->dtype = impl_->dtype;
  impl->storage = impl_->storage;
  return Tensor(std::move(impl));
}

Tensor Tensor::to(DType target) const {
  if (target == dtype()) return clone();
  Tensor out = zeros(shape(), target);
  out.copy_from(*this);
  return out;
}

void Tensor::copy_from(const Tensor& src) {
  if (src.shape() != shape()) {
    throw ShapeError("copy_from: shape " + src.shape().str() + " into " + shape().str());
  }
  dispatch(dtype(), [&]<typename Dst>() {
    auto dst = data<Dst>();
    dispatch(src.dtype(), [&]<typename Src>() {
      auto s = src.data<Src>();
      std::transform(s.begin(), s.end(), dst.begin(), [](Src v) { return static_cast<Dst>(v); });
    });
  });
}

bool Tensor::bit_equal(const Tensor& other) const {
  if (!defined() || !other.defined()) return defined() == other.defined();
  if (dtype() != other.dtype() || shape() != other.shape()) return false;
  return dispatch(dtype(), [&]<typename T>() {
    auto a = data<T>();
    auto b = other.data<T>();
    return a.empty() || std::memcmp(a.data(), b.data(), a.size_bytes()) == 0;
  });
}

}  // namespace avnet
