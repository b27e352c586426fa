// Copyright 2026 The fudsa Authors
// SPDX-License-Identifier: Apache-2.0

#include "layers/layers.hpp"

#include "common/error.hpp"

namespace fudsa {

template <typename T>
Conv2dLayer<T>::Conv2dLayer(std::int64_t in_channels, std::int64_t out_channels,
                            int kernel, Conv2dOptions opts, SeedSource& seeds)
    : weight(Tensor<T>::he_normal({out_channels, in_channels, kernel, kernel},
                                  in_channels * kernel * kernel, seeds.next())),
      bias(Tensor<T>::zeros({out_channels, 1, 1, 1})),
      options(opts) {
  weight.set_requires_grad(true);
  bias.set_requires_grad(true);
}

template <typename T>
Tensor<T> Conv2dLayer<T>::forward(const Tensor<T>& x) const {
  return conv2d(x, weight, bias, options);
}

template <typename T>
void Conv2dLayer<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

template <typename T>
DenseLayer<T>::DenseLayer(std::int64_t in_features, std::int64_t out_features,
                          SeedSource& seeds)
    : weight(Tensor<T>::he_normal({out_features, in_features, 1, 1}, in_features,
                                  seeds.next())),
      bias(Tensor<T>::zeros({out_features, 1, 1, 1})) {
  weight.set_requires_grad(true);
  bias.set_requires_grad(true);
}

template <typename T>
void DenseLayer<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

template <typename T>
ConvBlock<T>::ConvBlock(std::int64_t in_channels, std::int64_t out_channels,
                        SeedSource& seeds)
    : first(in_channels, out_channels, 3, {1, 1, 1}, seeds),
      second(out_channels, out_channels, 3, {1, 1, 1}, seeds) {}

template <typename T>
Tensor<T> ConvBlock<T>::forward(const Tensor<T>& x) const {
  if (x.shape().c != in_channels()) {
    fail(ErrorCode::ShapeMismatch, "conv block expects " + std::to_string(in_channels()) +
                                       " channels, got " + x.shape().str());
  }
  return relu(second.forward(relu(first.forward(x))));
}

template <typename T>
void ConvBlock<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  first.collect(prefix + ".conv1", out);
  second.collect(prefix + ".conv2", out);
}

template <typename T>
MatchChain<T>::MatchChain(int source, int target, std::int64_t source_channels,
                          std::int64_t target_channels, SeedSource& seeds)
    : source_level(source), target_level(target) {
  if (source < 1 || target < source) {
    fail(ErrorCode::InvalidArgument, "match chain requires 1 <= source <= target");
  }
  const int length = target - source + 1;
  for (int hop = 0; hop < length; ++hop) {
    const bool last = hop + 1 == length;
    hops.emplace_back(source_channels, last ? target_channels : source_channels, 2,
                      Conv2dOptions{2, 1, 0}, seeds);
  }
}

template <typename T>
Tensor<T> MatchChain<T>::forward(const Tensor<T>& x, std::int64_t out_h,
                                 std::int64_t out_w) const {
  const std::int64_t factor = std::int64_t{1} << hops.size();
  const Shape& s = x.shape();
  if (s.h != out_h * factor || s.w != out_w * factor) {
    fail(ErrorCode::ShapeMismatch,
         "match chain " + std::to_string(source_level) + "->" + std::to_string(target_level) +
             " needs input extents " + std::to_string(out_h * factor) + "x" +
             std::to_string(out_w * factor) + ", got " + s.str());
  }
  Tensor<T> y = x;
  for (const auto& hop : hops) y = hop.forward(y);
  return y;
}

template <typename T>
void MatchChain<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  for (std::size_t i = 0; i < hops.size(); ++i) {
    hops[i].collect(prefix + ".hop" + std::to_string(i), out);
  }
}

template <typename T>
SdcBlock<T>::SdcBlock(std::int64_t channels, const std::vector<int>& dilations,
                      SeedSource& seeds) {
  if (dilations.empty()) fail(ErrorCode::InvalidArgument, "SDC block needs at least one dilation");
  for (int d : dilations) {
    if (d < 1) fail(ErrorCode::InvalidArgument, "dilation rates must be >= 1");
    layers.emplace_back(channels, channels, 3, Conv2dOptions{1, d, d}, seeds);
  }
}

template <typename T>
Tensor<T> SdcBlock<T>::forward(const Tensor<T>& x) const {
  Tensor<T> y = x;
  for (const auto& layer : layers) y = relu(layer.forward(y));
  return y;
}

template <typename T>
void SdcBlock<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].collect(prefix + ".d" + std::to_string(layers[i].options.dilation), out);
  }
}

template <typename T>
std::int64_t MlpHead<T>::hidden_width(std::int64_t channels, int reduction) {
  if (reduction < 1) fail(ErrorCode::InvalidArgument, "MLP reduction ratio must be >= 1");
  return (channels + reduction - 1) / reduction;
}

template <typename T>
MlpHead<T>::MlpHead(std::int64_t channels, int reduction, SeedSource& seeds)
    : squeeze(channels, hidden_width(channels, reduction), seeds),
      expand(hidden_width(channels, reduction), channels, seeds) {}

template <typename T>
Tensor<T> MlpHead<T>::forward(const Tensor<T>& g) const {
  return sigmoid(expand.forward(relu(squeeze.forward(g))));
}

template <typename T>
void MlpHead<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  squeeze.collect(prefix + ".fc1", out);
  expand.collect(prefix + ".fc2", out);
}

template struct Conv2dLayer<float>;
template struct Conv2dLayer<double>;
template struct DenseLayer<float>;
template struct DenseLayer<double>;
template struct ConvBlock<float>;
template struct ConvBlock<double>;
template struct MatchChain<float>;
template struct MatchChain<double>;
template struct SdcBlock<float>;
template struct SdcBlock<double>;
template struct MlpHead<float>;
template struct MlpHead<double>;

}  // namespace fudsa
