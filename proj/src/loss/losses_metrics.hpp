// Copyright 2026 The fudsa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "net/fudsa_net.hpp"

namespace fudsa {

struct LossConfig {
  double alpha = 0.7;        // false-negative weight
  double beta = 0.3;         // false-positive weight
  double gamma = 4.0 / 3.0;  // applied as (1 - TI)^(1/gamma)
  double smooth = 1e-6;
  /// One weight per head, final head first, then side heads from level 2 up.
  /// Empty means uniform over however many heads the model emits.
  std::vector<double> side_weights;
  /// Soft counts per image, losses averaged over the batch.
  bool per_image = false;

  /// Throws InvalidArgument on violated invariants.
  void validate() const;
};

/// Soft Tversky index (TP + e) / (TP + a FN + b FP + e), pooled over the whole
/// batch, or per image when `per_image` (shape (N,1,1,1)). Labels must be 0/1.
template <typename T>
Tensor<T> tversky_index(const Tensor<T>& p, const Tensor<T>& y, double alpha, double beta,
                        double smooth, bool per_image = false);

/// (1 - x)^exponent elementwise; the derivative is taken as 0 where 1 - x <= 0.
template <typename T>
Tensor<T> focal_power(const Tensor<T>& ti, double exponent);

template <typename T>
Tensor<T> focal_tversky(const Tensor<T>& p, const Tensor<T>& y, const LossConfig& cfg);

/// Weighted focal Tversky over the final map and every side map.
template <typename T>
Tensor<T> supervised_loss(const ForwardOutputs<T>& outputs, const Tensor<T>& y,
                          const LossConfig& cfg);

struct MetricsRecord {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;
  double dsc = 1.0;
  double iou = 1.0;
  double recall = 1.0;

  /// Ratios from counts; a zero denominator yields 1.
  static MetricsRecord from_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn,
                                   std::int64_t tn);
  MetricsRecord& operator+=(const MetricsRecord& other);
  bool operator==(const MetricsRecord&) const = default;
};

inline constexpr double kMaskThreshold = 0.5;

/// 1 where p >= threshold, else 0.
template <typename T>
Tensor<T> threshold_mask(const Tensor<T>& p, double threshold = kMaskThreshold);

template <typename T>
MetricsRecord segmentation_metrics(const Tensor<T>& pred_mask, const Tensor<T>& y);

std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& split, std::int64_t n_images, const MetricsRecord& m);

}  // namespace fudsa
