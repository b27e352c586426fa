// Copyright 2026 The fudsa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>

#include "tensor/tape.hpp"
#include "tensor/tensor.hpp"

namespace fudsa {

enum class UpsampleMode { Nearest, Bilinear };

struct Conv2dOptions {
  int stride = 1;
  int dilation = 1;
  int padding = 0;
};

/// floor((in + 2p - d(k-1) - 1) / s) + 1, or a value < 1 when the window
/// does not fit.
std::int64_t conv_out_extent(std::int64_t in, std::int64_t kernel,
                             const Conv2dOptions& opts) noexcept;

// Every op below records itself on the active tape (if any) when one of its
// inputs tracks gradients.

/// a + b. `b` may broadcast: each of its extents equals a's or is 1.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

/// a * b with the same broadcast rule as add.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

/// Sum of all elements as a (1,1,1,1) tensor.
template <typename T>
Tensor<T> sum(const Tensor<T>& x);

template <typename T>
Tensor<T> mean(const Tensor<T>& x);

/// Zero-padded cross-correlation. `bias` may be undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel,
                 const Tensor<T>& bias, const Conv2dOptions& opts);

/// 2x2 window, stride 2. Ties route the gradient to the first maximum in
/// row-major window order.
template <typename T>
Tensor<T> max_pool2(const Tensor<T>& x);

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

/// Resampling to an arbitrary (out_h, out_w). Bilinear uses half-pixel
/// centres, src = (dst + 0.5) * in / out - 0.5, clamped to the edges.
/// Nearest uses src = floor(dst * in / out).
template <typename T>
Tensor<T> resize(const Tensor<T>& x, std::int64_t out_h, std::int64_t out_w,
                 UpsampleMode mode);

/// Integer-factor upsampling (factor >= 2).
template <typename T>
Tensor<T> upsample(const Tensor<T>& x, int factor, UpsampleMode mode);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

/// out[n] = weight * x[n] + bias for x of shape (N,C,1,1), weight
/// (Cout,C,1,1) and bias (Cout,1,1,1) (bias may be undefined).
template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weight,
                const Tensor<T>& bias);

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> xs);

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t offset,
                         std::int64_t count);

}  // namespace fudsa
