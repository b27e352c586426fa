// Copyright 2026 The fudsa Authors
// SPDX-License-Identifier: Apache-2.0

#include "loss/losses_metrics.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "common/error.hpp"

namespace fudsa {

void LossConfig::validate() const {
  if (!(alpha >= 0.0 && beta >= 0.0) || std::abs(alpha + beta - 1.0) > 1e-9) {
    fail(ErrorCode::InvalidArgument, "loss alpha and beta must be non-negative and sum to 1");
  }
  if (!(gamma > 0.0)) fail(ErrorCode::InvalidArgument, "loss gamma must be > 0");
  if (!(smooth > 0.0)) fail(ErrorCode::InvalidArgument, "loss smooth term must be > 0");
  if (!side_weights.empty()) {
    double total = 0.0;
    for (double w : side_weights) {
      if (!(w >= 0.0)) fail(ErrorCode::InvalidArgument, "side weights must be non-negative");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      fail(ErrorCode::InvalidArgument, "side weights must sum to 1 including the final head");
    }
  }
}

namespace {

template <typename T>
void check_pair(const Tensor<T>& p, const Tensor<T>& y) {
  if (!(p.shape() == y.shape())) {
    fail(ErrorCode::ShapeMismatch, "prediction " + p.shape().str() + " and target " +
                                       y.shape().str() + " differ in shape");
  }
  for (T v : y.data()) {
    if (v != T(0) && v != T(1)) {
      fail(ErrorCode::InvalidLabel, "target values must be 0 or 1");
    }
  }
}

struct SoftCounts {
  double tp = 0.0;
  double fn = 0.0;
  double fp = 0.0;
};

}  // namespace

template <typename T>
Tensor<T> tversky_index(const Tensor<T>& p, const Tensor<T>& y, double alpha, double beta,
                        double smooth, bool per_image) {
  check_pair(p, y);
  const Shape& s = p.shape();
  const std::int64_t groups = per_image ? s.n : 1;
  const std::int64_t span = s.numel() / groups;
  std::vector<SoftCounts> counts(static_cast<std::size_t>(groups));
  const auto pd = p.data();
  const auto yd = y.data();
  for (std::int64_t g = 0; g < groups; ++g) {
    SoftCounts& c = counts[static_cast<std::size_t>(g)];
    for (std::int64_t i = g * span; i < (g + 1) * span; ++i) {
      const double pv = pd[static_cast<std::size_t>(i)];
      const double yv = yd[static_cast<std::size_t>(i)];
      c.tp += pv * yv;
      c.fn += (1.0 - pv) * yv;
      c.fp += pv * (1.0 - yv);
    }
  }
  Tensor<T> out(Shape{groups, 1, 1, 1});
  auto od = out.mutable_data();
  for (std::int64_t g = 0; g < groups; ++g) {
    const SoftCounts& c = counts[static_cast<std::size_t>(g)];
    od[static_cast<std::size_t>(g)] =
        static_cast<T>((c.tp + smooth) / (c.tp + alpha * c.fn + beta * c.fp + smooth));
  }
  record<T>(OpKind::TverskyIndex, {&p}, out,
            [p = p, y = y, out, counts = std::move(counts), alpha, beta, smooth, span]() mutable {
    const auto gout = out.grad();
    auto gp = p.mutable_grad();
    const auto yd = y.data();
    for (std::size_t g = 0; g < counts.size(); ++g) {
      const SoftCounts& c = counts[g];
      const double num = c.tp + smooth;
      const double den = c.tp + alpha * c.fn + beta * c.fp + smooth;
      const double upstream = static_cast<double>(gout[g]);
      // d/dp_i: num' = y, den' = y - alpha y + beta (1 - y).
      const double on_pos = upstream * (den - num * (1.0 - alpha)) / (den * den);
      const double on_neg = upstream * (-num * beta) / (den * den);
      const auto begin = static_cast<std::int64_t>(g) * span;
      for (std::int64_t i = begin; i < begin + span; ++i) {
        const auto k = static_cast<std::size_t>(i);
        gp[k] += static_cast<T>(yd[k] != T(0) ? on_pos : on_neg);
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> focal_power(const Tensor<T>& ti, double exponent) {
  Tensor<T> out(ti.shape());
  {
    const auto x = ti.data();
    auto o = out.mutable_data();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double base = 1.0 - static_cast<double>(x[i]);
      o[i] = static_cast<T>(base <= 0.0 ? 0.0 : std::pow(base, exponent));  // NaN passes through
    }
  }
  record<T>(OpKind::FocalPower, {&ti}, out, [ti = ti, out, exponent]() mutable {
    const auto x = ti.data();
    const auto g = out.grad();
    auto gx = ti.mutable_grad();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double base = 1.0 - static_cast<double>(x[i]);
      if (base <= 0.0) continue;
      gx[i] += static_cast<T>(-static_cast<double>(g[i]) * exponent * std::pow(base, exponent - 1.0));
    }
  });
  return out;
}

template <typename T>
Tensor<T> focal_tversky(const Tensor<T>& p, const Tensor<T>& y, const LossConfig& cfg) {
  cfg.validate();
  const Tensor<T> ti = tversky_index(p, y, cfg.alpha, cfg.beta, cfg.smooth, cfg.per_image);
  const Tensor<T> ftl = focal_power(ti, 1.0 / cfg.gamma);
  return cfg.per_image ? mean(ftl) : ftl;
}

template <typename T>
Tensor<T> supervised_loss(const ForwardOutputs<T>& outputs, const Tensor<T>& y,
                          const LossConfig& cfg) {
  cfg.validate();
  const std::size_t heads = 1 + outputs.side_maps.size();
  std::vector<double> weights = cfg.side_weights;
  if (weights.empty()) {
    weights.assign(heads, 1.0 / static_cast<double>(heads));
  } else if (weights.size() != heads) {
    fail(ErrorCode::InvalidArgument, "expected " + std::to_string(heads) + " head weights, got " +
                                         std::to_string(weights.size()));
  }
  Tensor<T> total = scale(focal_tversky(outputs.final_map, y, cfg), static_cast<T>(weights[0]));
  for (std::size_t k = 0; k < outputs.side_maps.size(); ++k) {
    total = add(total, scale(focal_tversky(outputs.side_maps[k], y, cfg), static_cast<T>(weights[k + 1])));
  }
  return total;
}

MetricsRecord MetricsRecord::from_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn,
                                         std::int64_t tn) {
  auto ratio = [](std::int64_t num, std::int64_t den) {
    return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  MetricsRecord m;
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.tn = tn;
  m.dsc = ratio(2 * tp, 2 * tp + fp + fn);
  m.iou = ratio(tp, tp + fp + fn);
  m.recall = ratio(tp, tp + fn);
  return m;
}

MetricsRecord& MetricsRecord::operator+=(const MetricsRecord& other) {
  *this = from_counts(tp + other.tp, fp + other.fp, fn + other.fn, tn + other.tn);
  return *this;
}

template <typename T>
Tensor<T> threshold_mask(const Tensor<T>& p, double threshold) {
  Tensor<T> out(p.shape());
  const auto pd = p.data();
  auto od = out.mutable_data();
  for (std::size_t i = 0; i < pd.size(); ++i) {
    od[i] = static_cast<double>(pd[i]) >= threshold ? T(1) : T(0);
  }
  return out;
}

template <typename T>
MetricsRecord segmentation_metrics(const Tensor<T>& pred_mask, const Tensor<T>& y) {
  check_pair(pred_mask, y);
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  const auto pd = pred_mask.data();
  const auto yd = y.data();
  for (std::size_t i = 0; i < pd.size(); ++i) {
    if (pd[i] != T(0) && pd[i] != T(1)) {
      fail(ErrorCode::InvalidLabel, "predicted mask values must be 0 or 1");
    }
    const bool pv = pd[i] != T(0);
    const bool yv = yd[i] != T(0);
    tp += pv && yv;
    fp += pv && !yv;
    fn += !pv && yv;
    tn += !pv && !yv;
  }
  return MetricsRecord::from_counts(tp, fp, fn, tn);
}

std::string metrics_csv_header() { return "split,n_images,tp,fp,fn,tn,dsc,iou,recall"; }

std::string metrics_csv_row(const std::string& split, std::int64_t n_images, const MetricsRecord& m) {
  char ratios[64];
  std::snprintf(ratios, sizeof ratios, "%.4f,%.4f,%.4f", m.dsc, m.iou, m.recall);
  return split + "," + std::to_string(n_images) + "," + std::to_string(m.tp) + "," +
         std::to_string(m.fp) + "," + std::to_string(m.fn) + "," + std::to_string(m.tn) + "," + ratios;
}

#define FUDSA_INSTANTIATE(T)                                                                    \
  template Tensor<T> tversky_index<T>(const Tensor<T>&, const Tensor<T>&, double, double, double, \
                                      bool);                                                    \
  template Tensor<T> focal_power<T>(const Tensor<T>&, double);                                  \
  template Tensor<T> focal_tversky<T>(const Tensor<T>&, const Tensor<T>&, const LossConfig&);   \
  template Tensor<T> supervised_loss<T>(const ForwardOutputs<T>&, const Tensor<T>&,             \
                                        const LossConfig&);                                     \
  template Tensor<T> threshold_mask<T>(const Tensor<T>&, double);                               \
  template MetricsRecord segmentation_metrics<T>(const Tensor<T>&, const Tensor<T>&);

FUDSA_INSTANTIATE(float)
FUDSA_INSTANTIATE(double)

#undef FUDSA_INSTANTIATE

}  // namespace fudsa
