// Copyright 2026 The fudsa Authors
// SPDX-License-Identifier: Apache-2.0

#include "tensor/ften.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <vector>

#include "common/error.hpp"

namespace fudsa {

namespace {

constexpr std::array<char, 4> kMagic{'F', 'T', 'E', 'N'};
constexpr std::uint8_t kVersion = 1;

template <typename U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  }
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(const unsigned char* bytes) {
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    value |= static_cast<U>(bytes[i]) << (8 * i);
  }
  return value;
}

void read_exact(std::istream& in, void* dst, std::size_t n, const char* what) {
  in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    fail(ErrorCode::Io, std::string("FTEN: truncated ") + what);
  }
}

}  // namespace

template <typename T>
void write_ften(std::ostream& out, const Tensor<T>& tensor) {
  out.write(kMagic.data(), kMagic.size());
  const std::array<char, 8> header{static_cast<char>(kVersion),
                                   static_cast<char>(dtype_of<T>()), 4, 0, 0, 0, 0, 0};
  out.write(header.data(), header.size());
  const Shape& s = tensor.shape();
  for (int axis = 0; axis < 4; ++axis) put_le<std::uint64_t>(out, static_cast<std::uint64_t>(s[axis]));
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  std::vector<char> payload(tensor.data().size() * sizeof(T));
  char* p = payload.data();
  for (T v : tensor.data()) {
    const Bits bits = std::bit_cast<Bits>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) *p++ = static_cast<char>((bits >> (8 * i)) & 0xFF);
  }
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) fail(ErrorCode::Io, "FTEN: write failed");
}

Dtype peek_ften_dtype(std::istream& in) {
  const auto start = in.tellg();
  std::array<unsigned char, 6> head{};
  read_exact(in, head.data(), head.size(), "header");
  in.seekg(start);
  if (std::memcmp(head.data(), kMagic.data(), 4) != 0) fail(ErrorCode::Io, "FTEN: bad magic");
  if (head[5] > 1) fail(ErrorCode::Io, "FTEN: unknown dtype");
  return static_cast<Dtype>(head[5]);
}

template <typename T>
Tensor<T> read_ften(std::istream& in) {
  std::array<unsigned char, 12> head{};
  read_exact(in, head.data(), head.size(), "header");
  if (std::memcmp(head.data(), kMagic.data(), 4) != 0) fail(ErrorCode::Io, "FTEN: bad magic");
  if (head[4] != kVersion) fail(ErrorCode::Io, "FTEN: unsupported version");
  const std::uint8_t dtype = head[5];
  const std::uint8_t rank = head[6];
  if (dtype > 1) fail(ErrorCode::Io, "FTEN: unknown dtype");
  if (rank < 1 || rank > 4) fail(ErrorCode::Io, "FTEN: rank must be 1..4");
  for (int i = 7; i < 12; ++i) {
    if (head[static_cast<std::size_t>(i)] != 0) fail(ErrorCode::Io, "FTEN: nonzero reserved byte");
  }
  std::array<std::int64_t, 4> ext{1, 1, 1, 1};
  for (int axis = 0; axis < rank; ++axis) {
    std::array<unsigned char, 8> raw{};
    read_exact(in, raw.data(), raw.size(), "extents");
    const auto e = get_le<std::uint64_t>(raw.data());
    if (e == 0 || e > (std::uint64_t{1} << 40)) fail(ErrorCode::Io, "FTEN: bad extent");
    ext[static_cast<std::size_t>(axis)] = static_cast<std::int64_t>(e);
  }
  const Shape shape{ext[0], ext[1], ext[2], ext[3]};
  const auto count = static_cast<std::size_t>(shape.numel());
  const std::size_t width = dtype == 0 ? 4 : 8;
  std::vector<unsigned char> raw(count * width);
  read_exact(in, raw.data(), raw.size(), "payload");
  std::vector<T> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned char* b = raw.data() + i * width;
    values[i] = dtype == 0 ? static_cast<T>(std::bit_cast<float>(get_le<std::uint32_t>(b)))
                           : static_cast<T>(std::bit_cast<double>(get_le<std::uint64_t>(b)));
  }
  return Tensor<T>(shape, std::move(values));
}

template <typename T>
void save_ften(const std::filesystem::path& path, const Tensor<T>& tensor) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  write_ften(out, tensor);
}

template <typename T>
Tensor<T> load_ften(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  try {
    return read_ften<T>(in);
  } catch (const Error& e) {
    fail(e.code(), path.string() + ": " + e.what());
  }
}

template void write_ften<float>(std::ostream&, const Tensor<float>&);
template void write_ften<double>(std::ostream&, const Tensor<double>&);
template Tensor<float> read_ften<float>(std::istream&);
template Tensor<double> read_ften<double>(std::istream&);
template void save_ften<float>(const std::filesystem::path&, const Tensor<float>&);
template void save_ften<double>(const std::filesystem::path&, const Tensor<double>&);
template Tensor<float> load_ften<float>(const std::filesystem::path&);
template Tensor<double> load_ften<double>(const std::filesystem::path&);

}  // namespace fudsa
