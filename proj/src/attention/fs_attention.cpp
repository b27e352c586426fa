// Copyright 2026 The fudsa Authors
// SPDX-License-Identifier: Apache-2.0

#include "attention/fs_attention.hpp"

#include "common/error.hpp"

namespace fudsa {

namespace {

template <typename T>
Tensor<T> sum_maps(std::span<const Tensor<T>> maps, const Tensor<T>& base, const char* branch) {
  Tensor<T> acc = base;
  for (const auto& m : maps) {
    if (!(m.shape() == base.shape())) {
      fail(ErrorCode::ShapeMismatch, std::string(branch) + " summand " + m.shape().str() +
                                         " differs from " + base.shape().str());
    }
    acc = add(acc, m);
  }
  return acc;
}

}  // namespace

template <typename T>
AttentionParams<T>::AttentionParams(int lvl, std::span<const std::int64_t> encoder_channels,
                                    const std::vector<int>& sdc_dilations,
                                    int mlp_reduction, SeedSource& seeds)
    : level(lvl) {
  if (lvl < 1 || static_cast<std::size_t>(lvl) != encoder_channels.size()) {
    fail(ErrorCode::InvalidArgument, "attention level must equal the number of encoder widths");
  }
  const std::int64_t c = encoder_channels.back();
  for (int i = 1; i <= lvl; ++i) {
    chains.emplace_back(i, lvl, encoder_channels[static_cast<std::size_t>(i - 1)], c, seeds);
  }
  decoder_reduce = Conv2dLayer<T>(2 * c, c, 1, {}, seeds);
  sdc = SdcBlock<T>(c, sdc_dilations, seeds);
  mlp = MlpHead<T>(c, mlp_reduction, seeds);
  spatial_conv3 = Conv2dLayer<T>(c, c, 3, {1, 1, 1}, seeds);
  spatial_conv1 = Conv2dLayer<T>(c, 1, 1, {}, seeds);
}

template <typename T>
void AttentionParams<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  for (const auto& chain : chains) {
    chain.collect(prefix + ".match" + std::to_string(chain.source_level), out);
  }
  decoder_reduce.collect(prefix + ".reduce", out);
  sdc.collect(prefix + ".sdc", out);
  mlp.collect(prefix + ".mlp", out);
  spatial_conv3.collect(prefix + ".spatial3", out);
  spatial_conv1.collect(prefix + ".spatial1", out);
}

template <typename T>
void AttentionInputs<T>::validate() const {
  if (level < 1 || encoder_maps.size() != static_cast<std::size_t>(level)) {
    fail(ErrorCode::ShapeMismatch, "attention at level " + std::to_string(level) + " needs " +
                                       std::to_string(level) + " encoder maps, got " +
                                       std::to_string(encoder_maps.size()));
  }
  const Shape& g = decoder_map.shape();
  const Shape& e = encoder_maps.back().shape();
  if (e.h != 2 * g.h || e.w != 2 * g.w || e.n != g.n) {
    fail(ErrorCode::ShapeMismatch, "encoder map " + e.str() +
                                       " must be twice the extents of decoder map " + g.str());
  }
  if (g.c != 2 * e.c) {
    fail(ErrorCode::ShapeMismatch, "decoder map " + g.str() +
                                       " must carry twice the channels of " + e.str());
  }
  for (int i = 1; i <= level; ++i) {
    const Shape& s = encoder_maps[static_cast<std::size_t>(i - 1)].shape();
    const std::int64_t factor = std::int64_t{1} << (level - i + 1);
    if (s.h != factor * g.h || s.w != factor * g.w || s.n != g.n) {
      fail(ErrorCode::ShapeMismatch, "encoder map E^" + std::to_string(i) + " " + s.str() +
                                         " is not " + std::to_string(factor) +
                                         "x the decoder extents");
    }
  }
}

template <typename T>
Tensor<T> reduce_decoder(const Tensor<T>& decoder_map, const AttentionParams<T>& params) {
  const Shape& g = decoder_map.shape();
  if (g.c % 2 != 0) {
    fail(ErrorCode::ShapeMismatch, "decoder map " + g.str() + " has an odd channel count");
  }
  return params.decoder_reduce.forward(decoder_map);
}

template <typename T>
std::vector<Tensor<T>> match_encoder_maps(std::span<const Tensor<T>> encoder_maps,
                                          const AttentionParams<T>& params,
                                          std::int64_t out_h, std::int64_t out_w) {
  if (encoder_maps.size() != params.chains.size()) {
    fail(ErrorCode::ShapeMismatch, "one encoder map per match chain is required");
  }
  std::vector<Tensor<T>> s_maps;
  s_maps.reserve(encoder_maps.size());
  for (std::size_t i = 0; i < encoder_maps.size(); ++i) {
    s_maps.push_back(params.chains[i].forward(encoder_maps[i], out_h, out_w));
  }
  return s_maps;
}

template <typename T>
ChannelBranchOutput<T> channel_branch(std::span<const Tensor<T>> s_maps,
                                      const Tensor<T>& reduced_decoder,
                                      const Tensor<T>& encoder_map,
                                      const AttentionParams<T>& params) {
  const Tensor<T> g_add = sum_maps(s_maps, reduced_decoder, "channel branch");
  const Tensor<T> weights = params.mlp.forward(global_avg_pool(params.sdc.forward(g_add)));
  if (weights.shape().c != encoder_map.shape().c) {
    fail(ErrorCode::ShapeMismatch, "channel weights " + weights.shape().str() +
                                       " do not match encoder map " + encoder_map.shape().str());
  }
  return {mul(encoder_map, weights), weights};
}

template <typename T>
Tensor<T> spatial_branch(std::span<const Tensor<T>> s_maps, const Tensor<T>& reduced_decoder,
                         const AttentionParams<T>& params, UpsampleMode mode) {
  const Tensor<T> summed = sum_maps(s_maps, reduced_decoder, "spatial branch");
  const Tensor<T> logits = params.spatial_conv1.forward(params.spatial_conv3.forward(summed));
  return upsample(sigmoid(logits), 2, mode);
}

template <typename T>
AttentionTrace<T> attention_forward(const AttentionInputs<T>& inputs,
                                    const AttentionParams<T>& params,
                                    const AttentionOptions& options) {
  inputs.validate();
  if (params.level != inputs.level) {
    fail(ErrorCode::ShapeMismatch, "attention parameters built for level " +
                                       std::to_string(params.level) + ", inputs are level " +
                                       std::to_string(inputs.level));
  }
  const Tensor<T>& e_l = inputs.encoder_maps.back();
  const Shape& g = inputs.decoder_map.shape();
  AttentionTrace<T> trace;
  trace.reduced_decoder = reduce_decoder(inputs.decoder_map, params);
  trace.s_maps = match_encoder_maps<T>(inputs.encoder_maps, params, g.h, g.w);
  const std::span<const Tensor<T>> all_s(trace.s_maps);

  if (options.bypass_gates) {
    trace.channel_weights = Tensor<T>::constant({g.n, e_l.shape().c, 1, 1}, T(1));
    trace.spatial_map = Tensor<T>::constant({g.n, 1, 2 * g.h, 2 * g.w}, T(1));
    trace.channel_gated = mul(e_l, trace.channel_weights);
    trace.output = mul(trace.channel_gated, trace.spatial_map);
    return trace;
  }

  if (options.spatial_only) {
    trace.channel_weights = Tensor<T>::constant({g.n, e_l.shape().c, 1, 1}, T(1));
    trace.channel_gated = e_l;
  } else {
    const std::size_t count = options.channel_branch_includes_sl ? all_s.size() : all_s.size() - 1;
    auto branch = channel_branch<T>(all_s.first(count), trace.reduced_decoder, e_l, params);
    trace.channel_gated = branch.gated;
    trace.channel_weights = branch.weights;
  }
  trace.spatial_map = spatial_branch<T>(all_s, trace.reduced_decoder, params, options.upsample_mode);
  trace.output = mul(trace.channel_gated, trace.spatial_map);
  return trace;
}

#define FUDSA_INSTANTIATE(T)                                                                 \
  template struct AttentionParams<T>;                                                        \
  template struct AttentionInputs<T>;                                                        \
  template Tensor<T> reduce_decoder<T>(const Tensor<T>&, const AttentionParams<T>&);         \
  template std::vector<Tensor<T>> match_encoder_maps<T>(std::span<const Tensor<T>>,          \
                                                        const AttentionParams<T>&,           \
                                                        std::int64_t, std::int64_t);         \
  template ChannelBranchOutput<T> channel_branch<T>(std::span<const Tensor<T>>,              \
                                                    const Tensor<T>&, const Tensor<T>&,      \
                                                    const AttentionParams<T>&);              \
  template Tensor<T> spatial_branch<T>(std::span<const Tensor<T>>, const Tensor<T>&,         \
                                       const AttentionParams<T>&, UpsampleMode);             \
  template AttentionTrace<T> attention_forward<T>(const AttentionInputs<T>&,                 \
                                                  const AttentionParams<T>&,                 \
                                                  const AttentionOptions&);

FUDSA_INSTANTIATE(float)
FUDSA_INSTANTIATE(double)

#undef FUDSA_INSTANTIATE

}  // namespace fudsa
