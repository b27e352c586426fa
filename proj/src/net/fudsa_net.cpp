// Copyright 2026 The fudsa Authors
// SPDX-License-Identifier: Apache-2.0

#include "net/fudsa_net.hpp"

#include <set>

#include "common/error.hpp"

namespace fudsa {

VariantFlags VariantFlags::from_name(const std::string& name) {
  VariantFlags v;
  if (name == "full") return v;
  if (name == "I") {
    v.spatial_only = true;
  } else if (name == "II") {
    v.deep_supervision = false;
  } else if (name == "III") {
    v.decoder_residuals = false;
  } else {
    fail(ErrorCode::InvalidArgument, "unknown variant '" + name + "' (expected full, I, II or III)");
  }
  return v;
}

std::int64_t NetworkConfig::channels_at(int level) const {
  return static_cast<std::int64_t>(base_channels) << (level - 1);
}

void NetworkConfig::validate() const {
  if (levels < 2) fail(ErrorCode::InvalidArgument, "levels must be >= 2");
  if (levels > 8) fail(ErrorCode::InvalidArgument, "levels must be <= 8");
  if (base_channels < 1) fail(ErrorCode::InvalidArgument, "base_channels must be >= 1");
  if (input_channels < 1) fail(ErrorCode::InvalidArgument, "input_channels must be >= 1");
  if (mlp_reduction < 1) fail(ErrorCode::InvalidArgument, "mlp_reduction must be >= 1");
  if (sdc_dilations.empty()) fail(ErrorCode::InvalidArgument, "sdc_dilations must not be empty");
  for (int d : sdc_dilations) {
    if (d < 1) fail(ErrorCode::InvalidArgument, "sdc_dilations entries must be >= 1");
  }
}

void NetworkConfig::check_input_extents(std::int64_t height, std::int64_t width) const {
  const std::int64_t unit = std::int64_t{1} << levels;
  if (height < unit || width < unit || height % unit != 0 || width % unit != 0) {
    fail(ErrorCode::ShapeMismatch, "input extents " + std::to_string(height) + "x" +
                                       std::to_string(width) + " must be positive multiples of 2^" +
                                       std::to_string(levels) + " = " + std::to_string(unit));
  }
}

template <typename T>
FudsaNet<T> FudsaNet<T>::build(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  FudsaNet net;
  net.config_ = config;
  SeedSource seeds(seed);
  const int depth = config.levels;

  std::vector<std::int64_t> widths;
  for (int i = 1; i <= depth; ++i) widths.push_back(config.channels_at(i));

  for (int i = 1; i <= depth; ++i) {
    const std::int64_t in = i == 1 ? config.input_channels : widths[static_cast<std::size_t>(i - 2)];
    net.encoder_.emplace_back(in, widths[static_cast<std::size_t>(i - 1)], seeds);
  }
  net.bottleneck_ = ConvBlock<T>(widths.back(), config.channels_at(depth + 1), seeds);

  for (int l = 1; l <= depth; ++l) {
    const std::int64_t c = widths[static_cast<std::size_t>(l - 1)];
    net.up_convs_.emplace_back(config.channels_at(l + 1), c, 3, Conv2dOptions{1, 1, 1}, seeds);
    net.decoder_.emplace_back(2 * c, c, seeds);
  }
  for (int l = 1; l < depth; ++l) {
    net.attention_.emplace_back(l, std::span<const std::int64_t>(widths.data(), static_cast<std::size_t>(l)),
                                config.sdc_dilations, config.mlp_reduction, seeds);
  }
  net.residual_proj_.resize(static_cast<std::size_t>(depth - 1));
  for (int l = 1; l < depth; ++l) {
    for (int m = l + 1; m <= depth; ++m) {
      net.residual_proj_[static_cast<std::size_t>(l - 1)].emplace_back(
          widths[static_cast<std::size_t>(m - 1)], widths[static_cast<std::size_t>(l - 1)], 1,
          Conv2dOptions{}, seeds);
    }
  }
  net.final_head_ = Conv2dLayer<T>(widths.front(), 1, 1, {}, seeds);
  if (config.variant.deep_supervision) {
    for (int l = 2; l <= depth; ++l) {
      net.side_heads_.emplace_back(widths[static_cast<std::size_t>(l - 1)], 1, 1, Conv2dOptions{}, seeds);
    }
  }
  return net;
}

template <typename T>
ForwardOutputs<T> FudsaNet<T>::forward(const Tensor<T>& x, const ForwardOptions& options) const {
  const Shape& xs = x.shape();
  if (xs.c != config_.input_channels) {
    fail(ErrorCode::ShapeMismatch, "input " + xs.str() + " must have " +
                                       std::to_string(config_.input_channels) + " channel(s)");
  }
  config_.check_input_extents(xs.h, xs.w);
  const int depth = config_.levels;
  const UpsampleMode mode = config_.upsample_mode;

  ForwardOutputs<T> out;
  Tensor<T> h = x;
  for (int i = 1; i <= depth; ++i) {
    if (i > 1) h = max_pool2(h);
    h = encoder_[static_cast<std::size_t>(i - 1)].forward(h);
    out.encoder_maps.push_back(h);
  }
  out.bottleneck = bottleneck_.forward(max_pool2(h));

  out.decoder_maps.resize(static_cast<std::size_t>(depth));
  out.attention.resize(static_cast<std::size_t>(depth - 1));

  {
    const Tensor<T> up = up_convs_.back().forward(upsample(out.bottleneck, 2, mode));
    const std::vector<Tensor<T>> parts{out.encoder_maps.back(), up};
    out.decoder_maps.back() = decoder_.back().forward(concat_channels<T>(parts));
  }

  AttentionOptions att_opts;
  att_opts.spatial_only = config_.variant.spatial_only;
  att_opts.channel_branch_includes_sl = config_.variant.channel_branch_includes_sl;
  att_opts.upsample_mode = mode;
  att_opts.bypass_gates = options.bypass_attention_gates;

  for (int l = depth - 1; l >= 1; --l) {
    const auto li = static_cast<std::size_t>(l - 1);
    const Tensor<T>& deeper = out.decoder_maps[li + 1];
    const Tensor<T> up = up_convs_[li].forward(upsample(deeper, 2, mode));

    AttentionInputs<T> inputs;
    inputs.level = l;
    inputs.encoder_maps.assign(out.encoder_maps.begin(), out.encoder_maps.begin() + l);
    inputs.decoder_map = deeper;
    auto trace = attention_forward(inputs, attention_[li], att_opts);

    const std::vector<Tensor<T>> parts{trace.output, up};
    Tensor<T> g = decoder_[li].forward(concat_channels<T>(parts));
    if (config_.variant.decoder_residuals) {
      for (int m = l + 1; m <= depth; ++m) {
        const auto& proj = residual_proj_[li][static_cast<std::size_t>(m - l - 1)];
        // The 1x1 projection commutes with bilinear/nearest resampling, so it
        // runs at the coarser resolution.
        Tensor<T> p = proj.forward(out.decoder_maps[static_cast<std::size_t>(m - 1)]);
        g = add(g, upsample(p, 1 << (m - l), mode));
      }
    }
    out.decoder_maps[li] = g;
    out.attention[li] = std::move(trace);
  }

  out.final_map = sigmoid(final_head_.forward(out.decoder_maps.front()));
  for (std::size_t k = 0; k < side_heads_.size(); ++k) {
    const int level = static_cast<int>(k) + 2;
    const Tensor<T> p = sigmoid(side_heads_[k].forward(out.decoder_maps[static_cast<std::size_t>(level - 1)]));
    out.side_maps.push_back(upsample(p, 1 << (level - 1), mode));
  }
  return out;
}

template <typename T>
ParamList<T> FudsaNet<T>::parameters() const {
  ParamList<T> params;
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    encoder_[i].collect("encoder" + std::to_string(i + 1), params);
  }
  bottleneck_.collect("bottleneck", params);
  for (int l = config_.levels; l >= 1; --l) {
    const auto li = static_cast<std::size_t>(l - 1);
    const std::string prefix = "decoder" + std::to_string(l);
    up_convs_[li].collect(prefix + ".up", params);
    if (l < config_.levels) attention_[li].collect(prefix + ".attention", params);
    decoder_[li].collect(prefix + ".block", params);
    if (l < config_.levels) {
      for (int m = l + 1; m <= config_.levels; ++m) {
        residual_proj_[li][static_cast<std::size_t>(m - l - 1)].collect(
            prefix + ".residual_from" + std::to_string(m), params);
      }
    }
  }
  final_head_.collect("head.final", params);
  for (std::size_t k = 0; k < side_heads_.size(); ++k) {
    side_heads_[k].collect("head.side" + std::to_string(k + 2), params);
  }
  return params;
}

template <typename T>
std::vector<ParamSummaryRow> FudsaNet<T>::parameter_summary() const {
  std::vector<ParamSummaryRow> rows;
  for (const auto& p : parameters()) {
    rows.push_back({p.name, p.tensor.shape(), p.tensor.numel()});
  }
  return rows;
}

template <typename T>
std::int64_t FudsaNet<T>::parameter_count() const {
  std::int64_t total = 0;
  for (const auto& p : parameters()) total += p.tensor.numel();
  return total;
}

template <typename T>
void FudsaNet<T>::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

template class FudsaNet<float>;
template class FudsaNet<double>;

}  // namespace fudsa
