// Copyright 2026 The fudsa Authors
// SPDX-License-Identifier: Apache-2.0

#include "tensor/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <sstream>

#include "common/error.hpp"

namespace fudsa {

namespace {

std::atomic<TensorId> g_next_id{1};

}  // namespace

std::int64_t Shape::operator[](int axis) const noexcept {
  switch (axis) {
    case 0: return n;
    case 1: return c;
    case 2: return h;
    default: return w;
  }
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '(' << n << ',' << c << ',' << h << ',' << w << ')';
  return os.str();
}

void validate_shape(const Shape& shape) {
  if (shape.n < 1 || shape.c < 1 || shape.h < 1 || shape.w < 1) {
    fail(ErrorCode::InvalidShape, "extents must be >= 1, got " + shape.str());
  }
}

template <typename T>
struct Tensor<T>::Storage {
  TensorId id = 0;
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
};

template <typename T>
Tensor<T>::Tensor(const Shape& shape)
    : Tensor(shape, std::vector<T>(static_cast<std::size_t>(
                        std::max<std::int64_t>(shape.numel(), 0)))) {}

template <typename T>
Tensor<T>::Tensor(const Shape& shape, std::vector<T> values) {
  validate_shape(shape);
  if (static_cast<std::int64_t>(values.size()) != shape.numel()) {
    fail(ErrorCode::InvalidShape,
         "buffer of " + std::to_string(values.size()) +
             " values does not fill shape " + shape.str());
  }
  s_ = std::make_shared<Storage>();
  s_->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  s_->shape = shape;
  s_->data = std::move(values);
}

template <typename T>
Tensor<T> Tensor<T>::constant(const Shape& shape, T value) {
  validate_shape(shape);
  return Tensor(shape, std::vector<T>(static_cast<std::size_t>(shape.numel()), value));
}

template <typename T>
Tensor<T> Tensor<T>::uniform(const Shape& shape, T lo, T hi,
                             std::uint64_t seed) {
  validate_shape(shape);
  if (!(lo < hi)) {
    fail(ErrorCode::InvalidArgument, "uniform init requires lo < hi");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(static_cast<double>(lo),
                                              static_cast<double>(hi));
  std::vector<T> values(static_cast<std::size_t>(shape.numel()));
  for (auto& v : values) v = static_cast<T>(dist(rng));
  return Tensor(shape, std::move(values));
}

template <typename T>
Tensor<T> Tensor<T>::he_normal(const Shape& shape, std::int64_t fan_in,
                               std::uint64_t seed) {
  validate_shape(shape);
  if (fan_in < 1) fail(ErrorCode::InvalidArgument, "he_normal requires fan_in >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  std::vector<T> values(static_cast<std::size_t>(shape.numel()));
  for (auto& v : values) v = static_cast<T>(dist(rng));
  return Tensor(shape, std::move(values));
}

template <typename T>
TensorId Tensor<T>::id() const {
  if (!s_) fail(ErrorCode::InvalidState, "undefined tensor");
  return s_->id;
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  if (!s_) fail(ErrorCode::InvalidState, "undefined tensor");
  return s_->shape;
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
  if (!s_) fail(ErrorCode::InvalidState, "undefined tensor");
  return s_->data;
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  if (!s_) fail(ErrorCode::InvalidState, "undefined tensor");
  return s_->data;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    fail(ErrorCode::InvalidArgument, "item() on non-scalar tensor " + shape().str());
  }
  return s_->data[0];
}

template <typename T>
std::int64_t Tensor<T>::offset(std::int64_t n, std::int64_t c, std::int64_t h,
                               std::int64_t w) const {
  const Shape& s = shape();
  return ((n * s.c + c) * s.h + h) * s.w + w;
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return s_ && s_->requires_grad;
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool enabled) {
  if (!s_) fail(ErrorCode::InvalidState, "undefined tensor");
  s_->requires_grad = enabled;
  if (enabled) {
    s_->grad.assign(s_->data.size(), T(0));
  } else {
    s_->grad.clear();
    s_->grad.shrink_to_fit();
  }
  return *this;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  if (!requires_grad()) fail(ErrorCode::InvalidState, "tensor has no gradient buffer");
  return s_->grad;
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
  if (!requires_grad()) fail(ErrorCode::InvalidState, "tensor has no gradient buffer");
  return s_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (requires_grad()) std::fill(s_->grad.begin(), s_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor(shape(), std::vector<T>(s_->data));
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace fudsa
