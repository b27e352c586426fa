// Copyright 2026 The fudsa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "layers/layers.hpp"

namespace fudsa {

// Full-scale attention gate for one skip connection at level l.
//
// Geometry at level l with C = C_l channels and (H, W) the extents of the
// next-deeper decoder map:
//   encoder maps   E^i : (N, C_i, 2^(l-i+1) H, 2^(l-i+1) W), i = 1..l
//   decoder map    G   : (N, 2C, H, W)
//   S^i = chain_i(E^i) : (N, C, H, W)
//   D   = conv1x1(G)   : (N, C, H, W)
// Channel gate:  W_cha = sigmoid(MLP(GAP(SDC(S^1 + ... + S^(l-1) + D))))
// Spatial gate:  Q = upsample2(sigmoid(conv1x1(conv3x3(S^1 + ... + S^l + D))))
// Output:        E_hat = Q * (W_cha * E^l)
// The channel sum stops at S^(l-1) and the spatial sum includes S^l.

struct AttentionOptions {
  bool spatial_only = false;
  /// Adds S^l to the channel-branch sum.
  bool channel_branch_includes_sl = false;
  UpsampleMode upsample_mode = UpsampleMode::Bilinear;
  /// Test hook: both gates fixed at 1.
  bool bypass_gates = false;
};

template <typename T>
struct AttentionParams {
  int level = 0;
  std::vector<MatchChain<T>> chains;  // chains[i - 1] maps E^i to S^i
  Conv2dLayer<T> decoder_reduce;
  SdcBlock<T> sdc;
  MlpHead<T> mlp;
  Conv2dLayer<T> spatial_conv3;
  Conv2dLayer<T> spatial_conv1;

  AttentionParams() = default;
  /// `encoder_channels` lists C_1..C_l.
  AttentionParams(int level, std::span<const std::int64_t> encoder_channels,
                  const std::vector<int>& sdc_dilations, int mlp_reduction,
                  SeedSource& seeds);

  std::int64_t channels() const { return decoder_reduce.out_channels(); }
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

template <typename T>
struct AttentionInputs {
  std::vector<Tensor<T>> encoder_maps;  // E^1..E^l
  Tensor<T> decoder_map;                // G^(l+1)
  int level = 0;

  /// Throws ShapeMismatch when the level geometry above does not hold.
  void validate() const;
};

template <typename T>
struct AttentionTrace {
  Tensor<T> output;            // E_hat (N, C, 2H, 2W)
  Tensor<T> channel_gated;     // E_tilde
  Tensor<T> channel_weights;   // W_cha (N, C, 1, 1)
  Tensor<T> spatial_map;       // Q (N, 1, 2H, 2W)
  Tensor<T> reduced_decoder;   // D^(l+1)
  std::vector<Tensor<T>> s_maps;
};

template <typename T>
struct ChannelBranchOutput {
  Tensor<T> gated;    // E_tilde
  Tensor<T> weights;  // W_cha
};

/// D^(l+1) from G^(l+1); throws ShapeMismatch on an odd channel count.
template <typename T>
Tensor<T> reduce_decoder(const Tensor<T>& decoder_map, const AttentionParams<T>& params);

/// S^1..S^l at the decoder map's extents.
template <typename T>
std::vector<Tensor<T>> match_encoder_maps(std::span<const Tensor<T>> encoder_maps,
                                          const AttentionParams<T>& params,
                                          std::int64_t out_h, std::int64_t out_w);

/// `s_maps` holds exactly the S-maps to add to D (normally S^1..S^(l-1)).
template <typename T>
ChannelBranchOutput<T> channel_branch(std::span<const Tensor<T>> s_maps,
                                      const Tensor<T>& reduced_decoder,
                                      const Tensor<T>& encoder_map,
                                      const AttentionParams<T>& params);

/// `s_maps` holds S^1..S^l.
template <typename T>
Tensor<T> spatial_branch(std::span<const Tensor<T>> s_maps, const Tensor<T>& reduced_decoder,
                         const AttentionParams<T>& params, UpsampleMode mode);

template <typename T>
AttentionTrace<T> attention_forward(const AttentionInputs<T>& inputs,
                                    const AttentionParams<T>& params,
                                    const AttentionOptions& options = {});

}  // namespace fudsa
