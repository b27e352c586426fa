// Copyright 2026 The fudsa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "attention/fs_attention.hpp"
#include "layers/layers.hpp"

namespace fudsa {

/// Structural switches for the ablation variants. The full model is
/// {spatial_only=false, deep_supervision=true, decoder_residuals=true}.
struct VariantFlags {
  bool spatial_only = false;
  bool deep_supervision = true;
  bool decoder_residuals = true;
  bool channel_branch_includes_sl = false;

  /// "full", "I" (spatial attention only), "II" (no deep supervision) or
  /// "III" (no decoder residuals).
  static VariantFlags from_name(const std::string& name);
  bool operator==(const VariantFlags&) const = default;
};

struct NetworkConfig {
  int levels = 4;
  int base_channels = 16;
  int input_channels = 1;
  int mlp_reduction = 4;
  std::vector<int> sdc_dilations{1, 2, 4};
  UpsampleMode upsample_mode = UpsampleMode::Bilinear;
  VariantFlags variant;

  /// Channels at encoder level i (1-based): C1 * 2^(i-1). Level L+1 is the
  /// bottleneck.
  std::int64_t channels_at(int level) const;
  /// Throws InvalidArgument on violated invariants.
  void validate() const;
  /// Throws ShapeMismatch unless height and width are divisible by 2^L.
  void check_input_extents(std::int64_t height, std::int64_t width) const;
};

template <typename T>
struct ForwardOutputs {
  Tensor<T> final_map;                // (N,1,H,W) probabilities
  std::vector<Tensor<T>> side_maps;   // levels 2..L, upsampled to (H,W)
  std::vector<Tensor<T>> encoder_maps;  // E^1..E^L
  // Intermediates kept for inspection; index l-1 holds level l.
  Tensor<T> bottleneck;
  std::vector<Tensor<T>> decoder_maps;  // G^1..G^L (post-residual)
  std::vector<std::optional<AttentionTrace<T>>> attention;  // levels 1..L-1
};

struct ForwardOptions {
  bool bypass_attention_gates = false;
};

struct ParamSummaryRow {
  std::string name;
  Shape shape;
  std::int64_t count = 0;
};

/// Encoder-decoder with full-scale attention on every skip below the deepest
/// level, additive projected residuals from all deeper decoder stages, and
/// optional deep-supervision heads.
///
/// Topology for depth L:
///   E^1 = block(x), E^i = block(pool(E^(i-1))), B = block(pool(E^L))
///   G^L = block(concat(E^L, conv3x3(up2(B))))
///   G^l = block(concat(attn_l(E^1..E^l, G^(l+1)), conv3x3(up2(G^(l+1)))))
///         + sum_{m>l} conv1x1(resize(G^m))            for l = L-1..1
///   final = up(sigmoid(conv1x1(G^1))), side_l = up(sigmoid(conv1x1(G^l)))
template <typename T>
class FudsaNet {
 public:
  static FudsaNet build(const NetworkConfig& config, std::uint64_t seed);

  const NetworkConfig& config() const noexcept { return config_; }
  ForwardOutputs<T> forward(const Tensor<T>& x, const ForwardOptions& options = {}) const;

  /// Stable, name-unique enumeration of every parameter tensor.
  ParamList<T> parameters() const;
  std::vector<ParamSummaryRow> parameter_summary() const;
  std::int64_t parameter_count() const;
  void zero_grad();

 private:
  NetworkConfig config_;
  std::vector<ConvBlock<T>> encoder_;           // levels 1..L
  ConvBlock<T> bottleneck_;
  std::vector<Conv2dLayer<T>> up_convs_;        // index l-1: G^(l+1) -> level l
  std::vector<ConvBlock<T>> decoder_;           // index l-1
  std::vector<AttentionParams<T>> attention_;   // levels 1..L-1
  // residual_proj_[l-1][m-l-1] projects G^m onto level l.
  std::vector<std::vector<Conv2dLayer<T>>> residual_proj_;
  Conv2dLayer<T> final_head_;
  std::vector<Conv2dLayer<T>> side_heads_;      // levels 2..L
};

extern template class FudsaNet<float>;
extern template class FudsaNet<double>;

}  // namespace fudsa
