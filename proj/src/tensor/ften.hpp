// Copyright 2026 The fudsa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "tensor/tensor.hpp"

namespace fudsa {

// FTEN record layout (little-endian throughout):
//   "FTEN" | u8 version=1 | u8 dtype (0=f32, 1=f64) | u8 rank | 5 zero bytes
//   | rank x u64 extents | row-major payload
// Tensors are always written with rank 4. Readers accept rank 1..4 and pad
// missing trailing extents with 1.

enum class Dtype : std::uint8_t { F32 = 0, F64 = 1 };

template <typename T>
constexpr Dtype dtype_of();
template <>
constexpr Dtype dtype_of<float>() { return Dtype::F32; }
template <>
constexpr Dtype dtype_of<double>() { return Dtype::F64; }

template <typename T>
void write_ften(std::ostream& out, const Tensor<T>& tensor);

/// Reads one record, converting the payload to T. Malformed input raises
/// ErrorCode::Io.
template <typename T>
Tensor<T> read_ften(std::istream& in);

/// Element type of the next record without consuming it.
Dtype peek_ften_dtype(std::istream& in);

template <typename T>
void save_ften(const std::filesystem::path& path, const Tensor<T>& tensor);

template <typename T>
Tensor<T> load_ften(const std::filesystem::path& path);

}  // namespace fudsa
