// Copyright 2026 The fudsa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fudsa {

/// Extents of a rank-4 (N, C, H, W) tensor. Parameters use the same four
/// axes: a conv kernel is (Cout, Cin, kH, kW), a bias is (Cout, 1, 1, 1) and
/// a dense weight is (Cout, Cin, 1, 1).
struct Shape {
  std::int64_t n = 1;
  std::int64_t c = 1;
  std::int64_t h = 1;
  std::int64_t w = 1;

  std::int64_t numel() const noexcept { return n * c * h * w; }
  std::int64_t operator[](int axis) const noexcept;
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Throws InvalidShape unless every extent is >= 1.
void validate_shape(const Shape& shape);

using TensorId = std::uint64_t;

/// Reference-counted handle to a dense row-major buffer. Copies of a handle
/// alias the same storage; use clone() for a deep copy. The gradient buffer
/// exists iff requires_grad() is set.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(const Shape& shape);
  Tensor(const Shape& shape, std::vector<T> values);

  static Tensor zeros(const Shape& shape) { return Tensor(shape); }
  static Tensor constant(const Shape& shape, T value);
  static Tensor uniform(const Shape& shape, T lo, T hi, std::uint64_t seed);
  /// Normal(0, 2 / fan_in) draws.
  static Tensor he_normal(const Shape& shape, std::int64_t fan_in,
                          std::uint64_t seed);

  bool defined() const noexcept { return static_cast<bool>(s_); }
  TensorId id() const;
  const Shape& shape() const;
  std::int64_t numel() const { return shape().numel(); }

  std::span<const T> data() const;
  /// Writable view. Only for tensors that are not part of a live tape
  /// (parameter updates between steps, test perturbations, fresh outputs).
  std::span<T> mutable_data();

  T item() const;
  std::int64_t offset(std::int64_t n, std::int64_t c, std::int64_t h,
                      std::int64_t w) const;
  T at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return data()[static_cast<std::size_t>(offset(n, c, h, w))];
  }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool enabled);
  std::span<const T> grad() const;
  std::span<T> mutable_grad();
  void zero_grad();

  Tensor clone() const;

 private:
  struct Storage;
  std::shared_ptr<Storage> s_;
};

/// Element-type conversion; the result is detached from any tape.
template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& src) {
  std::vector<To> out(src.data().begin(), src.data().end());
  return Tensor<To>(src.shape(), std::move(out));
}

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace fudsa
