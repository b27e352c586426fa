// Copyright 2026 The fudsa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tensor/ops.hpp"

namespace fudsa {

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

/// Hands out per-parameter seeds as fixed offsets from one base seed, in
/// construction order.
class SeedSource {
 public:
  explicit SeedSource(std::uint64_t base) : base_(base) {}
  std::uint64_t next() noexcept { return base_ + 0x9E3779B97F4A7C15ull * ++count_; }

 private:
  std::uint64_t base_;
  std::uint64_t count_ = 0;
};

/// He-normal kernel, zero bias.
template <typename T>
struct Conv2dLayer {
  Tensor<T> weight;
  Tensor<T> bias;
  Conv2dOptions options;

  Conv2dLayer() = default;
  Conv2dLayer(std::int64_t in_channels, std::int64_t out_channels, int kernel,
              Conv2dOptions opts, SeedSource& seeds);

  std::int64_t in_channels() const { return weight.shape().c; }
  std::int64_t out_channels() const { return weight.shape().n; }
  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

template <typename T>
struct DenseLayer {
  Tensor<T> weight;
  Tensor<T> bias;

  DenseLayer() = default;
  DenseLayer(std::int64_t in_features, std::int64_t out_features, SeedSource& seeds);

  Tensor<T> forward(const Tensor<T>& x) const { return dense(x, weight, bias); }
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

/// 3x3 same-padded conv + relu, twice.
template <typename T>
struct ConvBlock {
  Conv2dLayer<T> first;
  Conv2dLayer<T> second;

  ConvBlock() = default;
  ConvBlock(std::int64_t in_channels, std::int64_t out_channels, SeedSource& seeds);

  std::int64_t in_channels() const { return first.in_channels(); }
  std::int64_t out_channels() const { return second.out_channels(); }
  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

/// Brings encoder level `source_level` down to the resolution of the S-maps
/// used at attention level `target_level`: (target - source + 1) stride-2
/// 2x2 convolutions. Intermediate hops keep the source width; the last hop
/// maps to the target width. No nonlinearities.
template <typename T>
struct MatchChain {
  int source_level = 0;
  int target_level = 0;
  std::vector<Conv2dLayer<T>> hops;

  MatchChain() = default;
  MatchChain(int source, int target, std::int64_t source_channels,
             std::int64_t target_channels, SeedSource& seeds);

  std::size_t length() const noexcept { return hops.size(); }
  /// Throws ShapeMismatch unless x is exactly 2^length times (out_h, out_w).
  Tensor<T> forward(const Tensor<T>& x, std::int64_t out_h, std::int64_t out_w) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

/// Stacked dilated 3x3 convolutions, each followed by relu; shape-preserving.
template <typename T>
struct SdcBlock {
  std::vector<Conv2dLayer<T>> layers;

  SdcBlock() = default;
  SdcBlock(std::int64_t channels, const std::vector<int>& dilations, SeedSource& seeds);

  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

/// dense(C -> ceil(C/r)) + relu, dense(ceil(C/r) -> C) + sigmoid.
template <typename T>
struct MlpHead {
  DenseLayer<T> squeeze;
  DenseLayer<T> expand;

  MlpHead() = default;
  MlpHead(std::int64_t channels, int reduction, SeedSource& seeds);

  static std::int64_t hidden_width(std::int64_t channels, int reduction);
  Tensor<T> forward(const Tensor<T>& g) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

}  // namespace fudsa
