// Copyright 2026 The fudsa Authors
// SPDX-License-Identifier: Apache-2.0

#include "tensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "common/error.hpp"
#include "tensor/gemm.hpp"

namespace fudsa {

namespace {

using Index = std::int64_t;

struct BroadcastStrides {
  Index n, c, h, w;
};

// Strides into `b` when read at a's coordinates; zero on broadcast axes.
BroadcastStrides broadcast_strides(const Shape& a, const Shape& b, const char* op) {
  for (int axis = 0; axis < 4; ++axis) {
    if (b[axis] != a[axis] && b[axis] != 1) {
      fail(ErrorCode::ShapeMismatch, std::string(op) + ": cannot broadcast " +
                                         b.str() + " onto " + a.str());
    }
  }
  const Index sw = 1;
  const Index sh = b.w;
  const Index sc = b.h * b.w;
  const Index sn = b.c * b.h * b.w;
  return {b.n == 1 ? 0 : sn, b.c == 1 ? 0 : sc, b.h == 1 ? 0 : sh,
          b.w == 1 ? 0 : sw};
}

template <typename T, typename Fn>
void for_each_broadcast(const Shape& a, const BroadcastStrides& bs, Fn&& fn) {
  Index ai = 0;
  for (Index n = 0; n < a.n; ++n) {
    for (Index c = 0; c < a.c; ++c) {
      for (Index h = 0; h < a.h; ++h) {
        const Index brow = n * bs.n + c * bs.c + h * bs.h;
        for (Index w = 0; w < a.w; ++w, ++ai) fn(ai, brow + w * bs.w);
      }
    }
  }
}

template <typename T>
void accumulate(Tensor<T>& dst, std::span<const T> src) {
  auto g = dst.mutable_grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += src[i];
}

// Lowering of one batch item for the convolution GEMM.
template <typename T>
void im2col(const T* x, Index cin, Index h, Index w, Index kh, Index kw,
            Index hout, Index wout, const Conv2dOptions& o, T* cols) {
  const Index plane = hout * wout;
  for (Index ci = 0; ci < cin; ++ci) {
    const T* xc = x + ci * h * w;
    for (Index ki = 0; ki < kh; ++ki) {
      for (Index kj = 0; kj < kw; ++kj) {
        T* row = cols + ((ci * kh + ki) * kw + kj) * plane;
        for (Index oh = 0; oh < hout; ++oh) {
          const Index ih = oh * o.stride - o.padding + ki * o.dilation;
          T* dst = row + oh * wout;
          if (ih < 0 || ih >= h) {
            std::fill(dst, dst + wout, T(0));
            continue;
          }
          const T* src = xc + ih * w;
          for (Index ow = 0; ow < wout; ++ow) {
            const Index iw = ow * o.stride - o.padding + kj * o.dilation;
            dst[ow] = (iw >= 0 && iw < w) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, Index cin, Index h, Index w, Index kh, Index kw,
            Index hout, Index wout, const Conv2dOptions& o, T* dx) {
  const Index plane = hout * wout;
  for (Index ci = 0; ci < cin; ++ci) {
    T* dxc = dx + ci * h * w;
    for (Index ki = 0; ki < kh; ++ki) {
      for (Index kj = 0; kj < kw; ++kj) {
        const T* row = cols + ((ci * kh + ki) * kw + kj) * plane;
        for (Index oh = 0; oh < hout; ++oh) {
          const Index ih = oh * o.stride - o.padding + ki * o.dilation;
          if (ih < 0 || ih >= h) continue;
          const T* src = row + oh * wout;
          T* dst = dxc + ih * w;
          for (Index ow = 0; ow < wout; ++ow) {
            const Index iw = ow * o.stride - o.padding + kj * o.dilation;
            if (iw >= 0 && iw < w) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

struct AxisTaps {
  std::vector<Index> lo, hi;
  std::vector<double> w_lo, w_hi;
};

AxisTaps axis_taps(Index in, Index out, UpsampleMode mode) {
  AxisTaps t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.w_lo.resize(out);
  t.w_hi.resize(out);
  for (Index d = 0; d < out; ++d) {
    if (mode == UpsampleMode::Nearest) {
      const Index s = std::min(in - 1, (d * in) / out);
      t.lo[d] = t.hi[d] = s;
      t.w_lo[d] = 1.0;
      t.w_hi[d] = 0.0;
      continue;
    }
    double src = (static_cast<double>(d) + 0.5) * static_cast<double>(in) /
                     static_cast<double>(out) -
                 0.5;
    if (src < 0.0) src = 0.0;
    Index i0 = static_cast<Index>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const Index i1 = std::min(i0 + 1, in - 1);
    const double frac = src - static_cast<double>(i0);
    t.lo[d] = i0;
    t.hi[d] = i1;
    t.w_lo[d] = 1.0 - frac;
    t.w_hi[d] = frac;
  }
  return t;
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

std::int64_t conv_out_extent(std::int64_t in, std::int64_t kernel,
                             const Conv2dOptions& opts) noexcept {
  const std::int64_t span = in + 2 * opts.padding -
                            static_cast<std::int64_t>(opts.dilation) * (kernel - 1) - 1;
  if (span < 0 || opts.stride < 1) return 0;
  return span / opts.stride + 1;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& as = a.shape();
  const Shape& bsh = b.shape();
  const auto bs = broadcast_strides(as, bsh, "add");
  Tensor<T> out(as);
  {
    auto o = out.mutable_data();
    auto ad = a.data();
    auto bd = b.data();
    for_each_broadcast<T>(as, bs, [&](Index ai, Index bi) { o[ai] = ad[ai] + bd[bi]; });
  }
  record<T>(OpKind::Add, {&a, &b}, out, [a = a, b = b, out, bs]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) accumulate(a, g);
    if (b.requires_grad()) {
      auto gb = b.mutable_grad();
      for_each_broadcast<T>(a.shape(), bs, [&](Index ai, Index bi) { gb[bi] += g[ai]; });
    }
  });
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& as = a.shape();
  const auto bs = broadcast_strides(as, b.shape(), "mul");
  Tensor<T> out(as);
  {
    auto o = out.mutable_data();
    auto ad = a.data();
    auto bd = b.data();
    for_each_broadcast<T>(as, bs, [&](Index ai, Index bi) { o[ai] = ad[ai] * bd[bi]; });
  }
  record<T>(OpKind::Mul, {&a, &b}, out, [a = a, b = b, out, bs]() mutable {
    auto g = out.grad();
    auto ad = a.data();
    auto bd = b.data();
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      for_each_broadcast<T>(a.shape(), bs, [&](Index ai, Index bi) { ga[ai] += g[ai] * bd[bi]; });
    }
    if (b.requires_grad()) {
      auto gb = b.mutable_grad();
      for_each_broadcast<T>(a.shape(), bs, [&](Index ai, Index bi) { gb[bi] += g[ai] * ad[ai]; });
    }
  });
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  Tensor<T> out(x.shape());
  {
    auto o = out.mutable_data();
    auto xd = x.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = xd[i] * factor;
  }
  record<T>(OpKind::Scale, {&x}, out, [x = x, out, factor]() mutable {
    auto g = out.grad();
    auto gx = x.mutable_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * factor;
  });
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = T(0);
  for (T v : x.data()) total += v;
  Tensor<T> out(Shape{1, 1, 1, 1}, {total});
  record<T>(OpKind::Sum, {&x}, out, [x = x, out]() mutable {
    const T g = out.grad()[0];
    for (T& v : x.mutable_grad()) v += g;
  });
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel,
                 const Tensor<T>& bias, const Conv2dOptions& opts) {
  const Shape& xs = x.shape();
  const Shape& ks = kernel.shape();
  if (opts.stride < 1 || opts.dilation < 1 || opts.padding < 0) {
    fail(ErrorCode::InvalidArgument, "conv2d: stride and dilation must be >= 1, padding >= 0");
  }
  if (xs.c != ks.c) {
    fail(ErrorCode::ShapeMismatch, "conv2d: input " + xs.str() +
                                       " has " + std::to_string(xs.c) +
                                       " channels, kernel " + ks.str() + " expects " +
                                       std::to_string(ks.c));
  }
  if (bias.defined() && !(bias.shape() == Shape{ks.n, 1, 1, 1})) {
    fail(ErrorCode::ShapeMismatch, "conv2d: bias " + bias.shape().str() +
                                       " does not match kernel " + ks.str());
  }
  const Index hout = conv_out_extent(xs.h, ks.h, opts);
  const Index wout = conv_out_extent(xs.w, ks.w, opts);
  if (hout < 1 || wout < 1) {
    fail(ErrorCode::ShapeMismatch, "conv2d: kernel " + ks.str() +
                                       " does not fit input " + xs.str());
  }
  const Index cout = ks.n;
  const Index kdim = ks.c * ks.h * ks.w;
  const Index plane = hout * wout;
  const bool pointwise = ks.h == 1 && ks.w == 1 && opts.stride == 1 && opts.padding == 0;

  Tensor<T> out(Shape{xs.n, cout, hout, wout});
  {
    std::vector<T> cols(pointwise ? 0 : static_cast<std::size_t>(kdim * plane));
    const T* xd = x.data().data();
    const T* kd = kernel.data().data();
    T* od = out.mutable_data().data();
    for (Index n = 0; n < xs.n; ++n) {
      const T* xn = xd + n * xs.c * xs.h * xs.w;
      const T* lowered = xn;
      if (!pointwise) {
        im2col(xn, xs.c, xs.h, xs.w, ks.h, ks.w, hout, wout, opts, cols.data());
        lowered = cols.data();
      }
      T* on = od + n * cout * plane;
      detail::gemm<T>(false, false, cout, plane, kdim, T(1), kd, kdim, lowered,
                      plane, T(0), on, plane);
      if (bias.defined()) {
        const T* bd = bias.data().data();
        for (Index co = 0; co < cout; ++co) {
          T* row = on + co * plane;
          for (Index i = 0; i < plane; ++i) row[i] += bd[co];
        }
      }
    }
  }

  record<T>(OpKind::Conv2d, {&x, &kernel, &bias}, out,
            [x = x, kernel = kernel, bias = bias, out, opts, hout, wout, pointwise]() mutable {
    const Shape& xs = x.shape();
    const Shape& ks = kernel.shape();
    const Index cout = ks.n;
    const Index kdim = ks.c * ks.h * ks.w;
    const Index plane = hout * wout;
    const T* gd = out.grad().data();
    const T* xd = x.data().data();
    const T* kd = kernel.data().data();
    std::vector<T> cols(pointwise ? 0 : static_cast<std::size_t>(kdim * plane));
    for (Index n = 0; n < xs.n; ++n) {
      const T* gn = gd + n * cout * plane;
      if (kernel.requires_grad()) {
        const T* xn = xd + n * xs.c * xs.h * xs.w;
        const T* lowered = xn;
        if (!pointwise) {
          im2col(xn, xs.c, xs.h, xs.w, ks.h, ks.w, hout, wout, opts, cols.data());
          lowered = cols.data();
        }
        detail::gemm<T>(false, true, cout, kdim, plane, T(1), gn, plane,
                        lowered, plane, T(1), kernel.mutable_grad().data(), kdim);
      }
      if (x.requires_grad()) {
        T* dxn = x.mutable_grad().data() + n * xs.c * xs.h * xs.w;
        if (pointwise) {
          detail::gemm<T>(true, false, kdim, plane, cout, T(1), kd, kdim, gn,
                          plane, T(1), dxn, plane);
        } else {
          detail::gemm<T>(true, false, kdim, plane, cout, T(1), kd, kdim, gn,
                          plane, T(0), cols.data(), plane);
          col2im(cols.data(), xs.c, xs.h, xs.w, ks.h, ks.w, hout, wout, opts, dxn);
        }
      }
      if (bias.defined() && bias.requires_grad()) {
        auto gb = bias.mutable_grad();
        for (Index co = 0; co < cout; ++co) {
          const T* row = gn + co * plane;
          T acc = T(0);
          for (Index i = 0; i < plane; ++i) acc += row[i];
          gb[static_cast<std::size_t>(co)] += acc;
        }
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> max_pool2(const Tensor<T>& x) {
  const Shape& xs = x.shape();
  if (xs.h % 2 != 0 || xs.w % 2 != 0) {
    fail(ErrorCode::ShapeMismatch, "max_pool2: odd spatial extent in " + xs.str());
  }
  const Shape os{xs.n, xs.c, xs.h / 2, xs.w / 2};
  Tensor<T> out(os);
  std::vector<Index> argmax(static_cast<std::size_t>(os.numel()));
  {
    const T* xd = x.data().data();
    T* od = out.mutable_data().data();
    Index oi = 0;
    for (Index nc = 0; nc < xs.n * xs.c; ++nc) {
      const Index base = nc * xs.h * xs.w;
      for (Index oh = 0; oh < os.h; ++oh) {
        for (Index ow = 0; ow < os.w; ++ow, ++oi) {
          const Index r0 = base + (2 * oh) * xs.w + 2 * ow;
          const Index cand[4] = {r0, r0 + 1, r0 + xs.w, r0 + xs.w + 1};
          Index best = cand[0];
          for (int k = 1; k < 4; ++k) {
            if (xd[cand[k]] > xd[best]) best = cand[k];
          }
          od[oi] = xd[best];
          argmax[static_cast<std::size_t>(oi)] = best;
        }
      }
    }
  }
  record<T>(OpKind::MaxPool2, {&x}, out, [x = x, out, argmax = std::move(argmax)]() mutable {
    auto g = out.grad();
    auto gx = x.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[static_cast<std::size_t>(argmax[i])] += g[i];
  });
  return out;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  const Shape& xs = x.shape();
  const Index plane = xs.h * xs.w;
  Tensor<T> out(Shape{xs.n, xs.c, 1, 1});
  {
    const T* xd = x.data().data();
    auto o = out.mutable_data();
    for (Index nc = 0; nc < xs.n * xs.c; ++nc) {
      T acc = T(0);
      for (Index i = 0; i < plane; ++i) acc += xd[nc * plane + i];
      o[static_cast<std::size_t>(nc)] = acc / static_cast<T>(plane);
    }
  }
  record<T>(OpKind::GlobalAvgPool, {&x}, out, [x = x, out]() mutable {
    const Shape& xs = x.shape();
    const Index plane = xs.h * xs.w;
    auto g = out.grad();
    T* gx = x.mutable_grad().data();
    for (Index nc = 0; nc < xs.n * xs.c; ++nc) {
      const T share = g[static_cast<std::size_t>(nc)] / static_cast<T>(plane);
      for (Index i = 0; i < plane; ++i) gx[nc * plane + i] += share;
    }
  });
  return out;
}

template <typename T>
Tensor<T> resize(const Tensor<T>& x, std::int64_t out_h, std::int64_t out_w,
                 UpsampleMode mode) {
  const Shape& xs = x.shape();
  if (out_h < 1 || out_w < 1) {
    fail(ErrorCode::InvalidArgument, "resize: target extents must be >= 1");
  }
  const Shape os{xs.n, xs.c, out_h, out_w};
  Tensor<T> out(os);
  if (out_h == xs.h && out_w == xs.w) {
    std::copy(x.data().begin(), x.data().end(), out.mutable_data().begin());
    record<T>(OpKind::Resize, {&x}, out, [x = x, out]() mutable { accumulate(x, out.grad()); });
    return out;
  }
  auto rows = std::make_shared<AxisTaps>(axis_taps(xs.h, out_h, mode));
  auto cols = std::make_shared<AxisTaps>(axis_taps(xs.w, out_w, mode));
  {
    const T* xd = x.data().data();
    T* od = out.mutable_data().data();
    for (Index nc = 0; nc < xs.n * xs.c; ++nc) {
      const T* src = xd + nc * xs.h * xs.w;
      T* dst = od + nc * out_h * out_w;
      for (Index oh = 0; oh < out_h; ++oh) {
        const T* r0 = src + rows->lo[oh] * xs.w;
        const T* r1 = src + rows->hi[oh] * xs.w;
        const T wy0 = static_cast<T>(rows->w_lo[oh]);
        const T wy1 = static_cast<T>(rows->w_hi[oh]);
        for (Index ow = 0; ow < out_w; ++ow) {
          const Index c0 = cols->lo[ow];
          const Index c1 = cols->hi[ow];
          const T wx0 = static_cast<T>(cols->w_lo[ow]);
          const T wx1 = static_cast<T>(cols->w_hi[ow]);
          dst[oh * out_w + ow] =
              wy0 * (wx0 * r0[c0] + wx1 * r0[c1]) + wy1 * (wx0 * r1[c0] + wx1 * r1[c1]);
        }
      }
    }
  }
  record<T>(OpKind::Resize, {&x}, out, [x = x, out, rows, cols]() mutable {
    const Shape& xs = x.shape();
    const Shape& os = out.shape();
    const T* gd = out.grad().data();
    T* gx = x.mutable_grad().data();
    for (Index nc = 0; nc < xs.n * xs.c; ++nc) {
      const T* g = gd + nc * os.h * os.w;
      T* dst = gx + nc * xs.h * xs.w;
      for (Index oh = 0; oh < os.h; ++oh) {
        T* r0 = dst + rows->lo[oh] * xs.w;
        T* r1 = dst + rows->hi[oh] * xs.w;
        const T wy0 = static_cast<T>(rows->w_lo[oh]);
        const T wy1 = static_cast<T>(rows->w_hi[oh]);
        for (Index ow = 0; ow < os.w; ++ow) {
          const T v = g[oh * os.w + ow];
          const Index c0 = cols->lo[ow];
          const Index c1 = cols->hi[ow];
          const T wx0 = static_cast<T>(cols->w_lo[ow]);
          const T wx1 = static_cast<T>(cols->w_hi[ow]);
          r0[c0] += v * wy0 * wx0;
          r0[c1] += v * wy0 * wx1;
          r1[c0] += v * wy1 * wx0;
          r1[c1] += v * wy1 * wx1;
        }
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> upsample(const Tensor<T>& x, int factor, UpsampleMode mode) {
  if (factor < 2) {
    fail(ErrorCode::InvalidArgument, "upsample: factor must be >= 2, got " + std::to_string(factor));
  }
  return resize(x, x.shape().h * factor, x.shape().w * factor, mode);
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  {
    auto o = out.mutable_data();
    auto xd = x.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = xd[i] > T(0) ? xd[i] : T(0);
  }
  record<T>(OpKind::Relu, {&x}, out, [x = x, out]() mutable {
    auto g = out.grad();
    auto xd = x.data();
    auto gx = x.mutable_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (xd[i] > T(0)) gx[i] += g[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  {
    auto o = out.mutable_data();
    auto xd = x.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = stable_sigmoid(xd[i]);
  }
  record<T>(OpKind::Sigmoid, {&x}, out, [x = x, out]() mutable {
    auto g = out.grad();
    auto s = out.data();
    auto gx = x.mutable_grad();
    const T fault = testing::backward_fault() ? T(1.05) : T(1);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += fault * g[i] * s[i] * (T(1) - s[i]);
  });
  return out;
}

template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weight,
                const Tensor<T>& bias) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (xs.h != 1 || xs.w != 1) {
    fail(ErrorCode::ShapeMismatch, "dense: input must be (N,C,1,1), got " + xs.str());
  }
  if (ws.c != xs.c || ws.h != 1 || ws.w != 1) {
    fail(ErrorCode::ShapeMismatch, "dense: weight " + ws.str() +
                                       " incompatible with input " + xs.str());
  }
  if (bias.defined() && !(bias.shape() == Shape{ws.n, 1, 1, 1})) {
    fail(ErrorCode::ShapeMismatch, "dense: bias " + bias.shape().str() +
                                       " incompatible with weight " + ws.str());
  }
  const Index cout = ws.n;
  Tensor<T> out(Shape{xs.n, cout, 1, 1});
  {
    T* od = out.mutable_data().data();
    detail::gemm<T>(false, true, xs.n, cout, xs.c, T(1), x.data().data(), xs.c,
                    weight.data().data(), xs.c, T(0), od, cout);
    if (bias.defined()) {
      auto bd = bias.data();
      for (Index n = 0; n < xs.n; ++n) {
        for (Index co = 0; co < cout; ++co) od[n * cout + co] += bd[static_cast<std::size_t>(co)];
      }
    }
  }
  record<T>(OpKind::Dense, {&x, &weight, &bias}, out, [x = x, weight = weight, bias = bias, out]() mutable {
    const Shape& xs = x.shape();
    const Index cout = weight.shape().n;
    const T* g = out.grad().data();
    if (x.requires_grad()) {
      detail::gemm<T>(false, false, xs.n, xs.c, cout, T(1), g, cout,
                      weight.data().data(), xs.c, T(1), x.mutable_grad().data(), xs.c);
    }
    if (weight.requires_grad()) {
      detail::gemm<T>(true, false, cout, xs.c, xs.n, T(1), g, cout,
                      x.data().data(), xs.c, T(1), weight.mutable_grad().data(), xs.c);
    }
    if (bias.defined() && bias.requires_grad()) {
      auto gb = bias.mutable_grad();
      for (Index n = 0; n < xs.n; ++n) {
        for (Index co = 0; co < cout; ++co) gb[static_cast<std::size_t>(co)] += g[n * cout + co];
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> xs) {
  if (xs.empty()) fail(ErrorCode::InvalidArgument, "concat_channels: no inputs");
  const Shape& first = xs.front().shape();
  Index total = 0;
  for (const auto& t : xs) {
    const Shape& s = t.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      fail(ErrorCode::ShapeMismatch, "concat_channels: " + s.str() +
                                         " does not match " + first.str());
    }
    total += s.c;
  }
  const Index plane = first.h * first.w;
  Tensor<T> out(Shape{first.n, total, first.h, first.w});
  {
    T* od = out.mutable_data().data();
    for (Index n = 0; n < first.n; ++n) {
      Index offset = 0;
      for (const auto& t : xs) {
        const Index span = t.shape().c * plane;
        const T* src = t.data().data() + n * span;
        std::copy(src, src + span, od + (n * total + offset) * plane);
        offset += t.shape().c;
      }
    }
  }
  std::vector<Tensor<T>> inputs(xs.begin(), xs.end());
  record<T>(OpKind::Concat, inputs, out, [inputs, out]() mutable {
    const Shape& os = out.shape();
    const Index plane = os.h * os.w;
    const T* g = out.grad().data();
    for (Index n = 0; n < os.n; ++n) {
      Index offset = 0;
      for (auto& t : inputs) {
        const Index span = t.shape().c * plane;
        if (t.requires_grad()) {
          const T* src = g + (n * os.c + offset) * plane;
          T* dst = t.mutable_grad().data() + n * span;
          for (Index i = 0; i < span; ++i) dst[i] += src[i];
        }
        offset += t.shape().c;
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t offset,
                         std::int64_t count) {
  const Shape& xs = x.shape();
  if (offset < 0 || count < 1 || offset + count > xs.c) {
    fail(ErrorCode::InvalidArgument, "slice_channels: [" + std::to_string(offset) + ", " +
                                         std::to_string(offset + count) +
                                         ") outside " + xs.str());
  }
  const Index plane = xs.h * xs.w;
  Tensor<T> out(Shape{xs.n, count, xs.h, xs.w});
  {
    const T* xd = x.data().data();
    T* od = out.mutable_data().data();
    for (Index n = 0; n < xs.n; ++n) {
      const T* src = xd + (n * xs.c + offset) * plane;
      std::copy(src, src + count * plane, od + n * count * plane);
    }
  }
  record<T>(OpKind::Slice, {&x}, out, [x = x, out, offset, count]() mutable {
    const Shape& xs = x.shape();
    const Index plane = xs.h * xs.w;
    const T* g = out.grad().data();
    T* gx = x.mutable_grad().data();
    for (Index n = 0; n < xs.n; ++n) {
      T* dst = gx + (n * xs.c + offset) * plane;
      const T* src = g + n * count * plane;
      for (Index i = 0; i < count * plane; ++i) dst[i] += src[i];
    }
  });
  return out;
}

#define FUDSA_INSTANTIATE(T)                                                              \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                       \
  template Tensor<T> sum<T>(const Tensor<T>&);                                            \
  template Tensor<T> mean<T>(const Tensor<T>&);                                           \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                               const Conv2dOptions&);                                     \
  template Tensor<T> max_pool2<T>(const Tensor<T>&);                                      \
  template Tensor<T> global_avg_pool<T>(const Tensor<T>&);                                \
  template Tensor<T> resize<T>(const Tensor<T>&, std::int64_t, std::int64_t, UpsampleMode); \
  template Tensor<T> upsample<T>(const Tensor<T>&, int, UpsampleMode);                    \
  template Tensor<T> relu<T>(const Tensor<T>&);                                           \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                                        \
  template Tensor<T> dense<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);      \
  template Tensor<T> concat_channels<T>(std::span<const Tensor<T>>);                      \
  template Tensor<T> slice_channels<T>(const Tensor<T>&, std::int64_t, std::int64_t);

FUDSA_INSTANTIATE(float)
FUDSA_INSTANTIATE(double)

#undef FUDSA_INSTANTIATE

}  // namespace fudsa
