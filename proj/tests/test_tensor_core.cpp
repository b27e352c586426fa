// Copyright 2026 The fudsa Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <sstream>
#include <vector>

#include "common/error.hpp"
#include "support/fd_oracle.hpp"
#include "tensor/ften.hpp"
#include "tensor/ops.hpp"

using namespace fudsa;
using Catch::Approx;

namespace {

template <typename T>
std::vector<T> values(const Tensor<T>& t) {
  return {t.data().begin(), t.data().end()};
}

// Six-nested-loop reference cross-correlation.
std::vector<double> conv_loop_oracle(const Tensor<double>& x, const Tensor<double>& k,
                                     const Tensor<double>& b, int s, int d, int p,
                                     std::int64_t hout, std::int64_t wout) {
  const Shape xs = x.shape();
  const Shape ks = k.shape();
  std::vector<double> out(static_cast<std::size_t>(xs.n * ks.n * hout * wout), 0.0);
  std::size_t oi = 0;
  for (std::int64_t n = 0; n < xs.n; ++n)
    for (std::int64_t co = 0; co < ks.n; ++co)
      for (std::int64_t oh = 0; oh < hout; ++oh)
        for (std::int64_t ow = 0; ow < wout; ++ow, ++oi) {
          double acc = b.data()[static_cast<std::size_t>(co)];
          for (std::int64_t ci = 0; ci < xs.c; ++ci)
            for (std::int64_t i = 0; i < ks.h; ++i)
              for (std::int64_t j = 0; j < ks.w; ++j) {
                const std::int64_t ih = oh * s - p + i * d;
                const std::int64_t iw = ow * s - p + j * d;
                if (ih < 0 || iw < 0 || ih >= xs.h || iw >= xs.w) continue;
                acc += x.at(n, ci, ih, iw) * k.at(co, ci, i, j);
              }
          out[oi] = acc;
        }
  return out;
}

template <typename T>
ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an fudsa::Error");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("create: zeros, constant, seeded uniform", "[tensor]") {
  const auto z = Tensor<float>::zeros({1, 1, 2, 2});
  for (float v : z.data()) CHECK(v == 0.0f);
  const auto ones = Tensor<float>::constant({1, 3, 4, 4}, 1.0f);
  CHECK(ones.numel() == 48);
  for (float v : ones.data()) CHECK(v == 1.0f);
  const auto u1 = Tensor<float>::uniform({1, 1, 8, 8}, -1.0f, 1.0f, 7);
  const auto u2 = Tensor<float>::uniform({1, 1, 8, 8}, -1.0f, 1.0f, 7);
  CHECK(values(u1) == values(u2));
  CHECK(u1.id() != u2.id());
}

TEST_CASE("create: invalid extents and ranges", "[tensor]") {
  CHECK(code_of<float>([] { Tensor<float>::zeros({1, 0, 2, 2}); }) == ErrorCode::InvalidShape);
  CHECK(code_of<float>([] { Tensor<float>::zeros({-1, 1, 2, 2}); }) == ErrorCode::InvalidShape);
  CHECK(code_of<float>([] { Tensor<float>::uniform({1, 1, 2, 2}, 1.0f, 1.0f, 0); }) ==
        ErrorCode::InvalidArgument);
}

TEST_CASE("he_normal variance follows 2/fan_in", "[tensor]") {
  const std::int64_t fan_in = 3 * 3 * 8;
  const auto w = Tensor<double>::he_normal({64, 8, 3, 3}, fan_in, 11);
  double s = 0.0, s2 = 0.0;
  for (double v : w.data()) {
    s += v;
    s2 += v * v;
  }
  const double n = static_cast<double>(w.numel());
  const double var = s2 / n - (s / n) * (s / n);
  CHECK(var == Approx(2.0 / fan_in).epsilon(0.08));
}

TEST_CASE("ewise add and mul with broadcasting", "[tensor]") {
  const Tensor<float> a({1, 1, 2, 2}, {1, 2, 3, 4});
  const Tensor<float> zero({1, 1, 2, 2});
  CHECK(values(add(a, zero)) == std::vector<float>{1, 2, 3, 4});

  const Tensor<float> maps({1, 2, 2, 2}, {1, 1, 1, 1, 2, 2, 2, 2});
  const Tensor<float> gate({1, 2, 1, 1}, {0.5f, 3.0f});
  const auto scaled = mul(maps, gate);
  CHECK(scaled.shape() == Shape{1, 2, 2, 2});
  CHECK(values(scaled) == std::vector<float>{0.5f, 0.5f, 0.5f, 0.5f, 6, 6, 6, 6});

  const Tensor<float> single({1, 1, 2, 2}, {1, 0, 2, 0});
  CHECK(values(mul(maps, single)) == std::vector<float>{1, 0, 2, 0, 2, 0, 4, 0});

  CHECK(code_of<float>([&] { add(maps, Tensor<float>::zeros({1, 3, 2, 2})); }) ==
        ErrorCode::ShapeMismatch);
}

TEST_CASE("mul gradient: d sum(a*b)/da = b", "[tensor][grad]") {
  auto a = Tensor<float>::uniform({2, 3, 4, 4}, -1, 1, 1);
  const auto b = Tensor<float>::uniform({2, 3, 4, 4}, -1, 1, 2);
  a.set_requires_grad(true);
  Tape<float> tape;
  {
    TapeScope<float> scope(tape);
    backward(sum(mul(a, b)), tape);
  }
  CHECK(values<float>(Tensor<float>(a.shape(), {a.grad().begin(), a.grad().end()})) == values(b));

  auto a32 = Tensor<float>::uniform({1, 2, 3, 3}, -1, 1, 3);
  auto b32 = Tensor<float>::uniform({1, 2, 3, 3}, -1, 1, 4);
  const auto r = test::finite_difference_check<float>([&] { return sum(mul(a32, b32)); },
                                                     {a32, b32}, 1e-3);
  CHECK(r.max_rel_error < 1e-3);
}

TEST_CASE("broadcast-mul gradient equals explicit-tile reduction", "[tensor][grad]") {
  auto a = Tensor<double>::uniform({2, 3, 4, 5}, -1, 1, 21);
  auto per_channel = Tensor<double>::uniform({1, 3, 1, 1}, -1, 1, 22);
  auto per_pixel = Tensor<double>::uniform({2, 1, 4, 5}, -1, 1, 23);
  const auto upstream = Tensor<double>::uniform(a.shape(), -1, 1, 24);
  per_channel.set_requires_grad(true);
  per_pixel.set_requires_grad(true);
  Tape<double> tape;
  {
    TapeScope<double> scope(tape);
    backward(sum(mul(mul(mul(a, per_channel), per_pixel), upstream)), tape);
  }
  // Oracle: tile both gates to full shape, form the full-shape gradient of the
  // tiled operand, then sum over the broadcast axes by hand.
  const Shape s = a.shape();
  std::vector<double> want_c(3, 0.0);
  std::vector<double> want_p(static_cast<std::size_t>(2 * 4 * 5), 0.0);
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t c = 0; c < s.c; ++c)
      for (std::int64_t h = 0; h < s.h; ++h)
        for (std::int64_t w = 0; w < s.w; ++w) {
          const double g = upstream.at(n, c, h, w);
          const double av = a.at(n, c, h, w);
          const double tiled_c = per_channel.at(0, c, 0, 0);
          const double tiled_p = per_pixel.at(n, 0, h, w);
          want_c[static_cast<std::size_t>(c)] += g * av * tiled_p;
          want_p[static_cast<std::size_t>((n * 4 + h) * 5 + w)] += g * av * tiled_c;
        }
  for (std::size_t i = 0; i < want_c.size(); ++i) CHECK(per_channel.grad()[i] == Approx(want_c[i]).epsilon(1e-12));
  for (std::size_t i = 0; i < want_p.size(); ++i) CHECK(per_pixel.grad()[i] == Approx(want_p[i]).epsilon(1e-12));
}

TEST_CASE("conv2d: dimension arithmetic and sum of ones", "[tensor][conv]") {
  const auto x = Tensor<float>::uniform({1, 1, 4, 4}, -1, 1, 3);
  const auto k = Tensor<float>::uniform({1, 1, 2, 2}, -1, 1, 4);
  CHECK(conv2d(x, k, Tensor<float>(), {2, 1, 0}).shape() == Shape{1, 1, 2, 2});

  const auto ones = Tensor<float>::constant({1, 1, 3, 3}, 1.0f);
  const auto out = conv2d(ones, ones, Tensor<float>::zeros({1, 1, 1, 1}), {1, 1, 0});
  CHECK(out.shape() == Shape{1, 1, 1, 1});
  CHECK(out.item() == 9.0f);
}

TEST_CASE("conv2d: output extent follows the floor formula on a grid", "[tensor][conv]") {
  for (int s : {1, 2})
    for (int d : {1, 2, 4})
      for (int p : {0, 1, 2})
        for (int k : {1, 2, 3}) {
          const std::int64_t in = 11;
          const std::int64_t want = (in + 2 * p - d * (k - 1) - 1) / s + 1;
          const auto x = Tensor<float>::constant({1, 2, in, in}, 1.0f);
          const auto kernel = Tensor<float>::constant({3, 2, k, k}, 1.0f);
          const auto y = conv2d(x, kernel, Tensor<float>(), {s, d, p});
          CHECK(y.shape() == Shape{1, 3, want, want});
          CHECK(conv_out_extent(in, k, {s, d, p}) == want);
        }
}

TEST_CASE("conv2d: matches loop oracle and all three gradients check", "[tensor][conv][grad]") {
  auto x = Tensor<double>::uniform({2, 3, 8, 8}, -1, 1, 31);
  auto k = Tensor<double>::uniform({4, 3, 3, 3}, -1, 1, 32);
  auto b = Tensor<double>::uniform({4, 1, 1, 1}, -1, 1, 33);
  const Conv2dOptions opts{1, 2, 2};
  const auto y = conv2d(x, k, b, opts);
  REQUIRE(y.shape() == Shape{2, 4, 8, 8});
  const auto want = conv_loop_oracle(x, k, b, 1, 2, 2, 8, 8);
  for (std::size_t i = 0; i < want.size(); ++i) REQUIRE(y.data()[i] == Approx(want[i]).margin(1e-5));

  const auto r = test::finite_difference_check<double>(
      [&] { return test::probe(conv2d(x, k, b, opts)); }, {x, k, b}, 1e-6, 80);
  CHECK(r.max_rel_error < 1e-6);

  auto xs = Tensor<double>::uniform({1, 2, 6, 6}, -1, 1, 34);
  auto ks = Tensor<double>::uniform({3, 2, 2, 2}, -1, 1, 35);
  auto bs = Tensor<double>::uniform({3, 1, 1, 1}, -1, 1, 36);
  const auto strided = test::finite_difference_check<double>(
      [&] { return test::probe(conv2d(xs, ks, bs, {2, 1, 0})); }, {xs, ks, bs}, 1e-6);
  CHECK(strided.max_rel_error < 1e-6);
  auto k1 = Tensor<double>::uniform({4, 2, 1, 1}, -1, 1, 37);
  const auto pointwise = test::finite_difference_check<double>(
      [&] { return test::probe(conv2d(xs, k1, Tensor<double>(), {1, 1, 0})); }, {xs, k1}, 1e-6);
  CHECK(pointwise.max_rel_error < 1e-6);
}

TEST_CASE("conv2d: wide inputs, gradients over several hundred kernel columns", "[tensor][conv][grad]") {
  for (std::int64_t cin : {31, 64}) {
    auto x = Tensor<double>::uniform({2, cin, 8, 8}, -1, 1, 40);
    auto k = Tensor<double>::uniform({8, cin, 3, 3}, -1, 1, 41);
    auto b = Tensor<double>::uniform({8, 1, 1, 1}, -1, 1, 42);
    const auto y = conv2d(x, k, b, {1, 1, 1});
    const auto want = conv_loop_oracle(x, k, b, 1, 1, 1, 8, 8);
    for (std::size_t i = 0; i < want.size(); ++i) REQUIRE(y.data()[i] == Approx(want[i]).margin(1e-9));
    const auto r = test::finite_difference_check<double>(
        [&] { return test::probe(conv2d(x, k, b, {1, 1, 1})); }, {x, k, b}, 1e-6, 80);
    CHECK(r.max_rel_error < 1e-6);
  }
}

TEST_CASE("conv2d: error paths", "[tensor][conv]") {
  const auto x = Tensor<float>::zeros({1, 2, 4, 4});
  CHECK(code_of<float>([&] { conv2d(x, Tensor<float>::zeros({1, 3, 3, 3}), Tensor<float>(), {}); }) ==
        ErrorCode::ShapeMismatch);
  CHECK(code_of<float>([&] { conv2d(x, Tensor<float>::zeros({1, 2, 5, 5}), Tensor<float>(), {}); }) ==
        ErrorCode::ShapeMismatch);
}

TEST_CASE("max_pool2: values, tie-break and gradient", "[tensor][pool]") {
  const Tensor<float> win({1, 1, 2, 2}, {1, 2, 3, 4});
  CHECK(max_pool2(win).item() == 4.0f);

  auto flat = Tensor<float>::constant({1, 1, 4, 4}, 2.5f);
  flat.set_requires_grad(true);
  Tape<float> tape;
  {
    TapeScope<float> scope(tape);
    const auto y = max_pool2(flat);
    for (float v : y.data()) CHECK(v == 2.5f);
    backward(sum(y), tape);
  }
  const std::vector<float> want{1, 0, 1, 0, 0, 0, 0, 0, 1, 0, 1, 0, 0, 0, 0, 0};
  CHECK(std::vector<float>(flat.grad().begin(), flat.grad().end()) == want);

  auto x = Tensor<double>::uniform({1, 2, 8, 8}, -1, 1, 41);
  const auto y = max_pool2(x);
  for (std::int64_t c = 0; c < 2; ++c)
    for (std::int64_t h = 0; h < 4; ++h)
      for (std::int64_t w = 0; w < 4; ++w) {
        const double m = std::max({x.at(0, c, 2 * h, 2 * w), x.at(0, c, 2 * h, 2 * w + 1),
                                   x.at(0, c, 2 * h + 1, 2 * w), x.at(0, c, 2 * h + 1, 2 * w + 1)});
        CHECK(y.at(0, c, h, w) == m);
      }
  const auto r = test::finite_difference_check<double>([&] { return test::probe(max_pool2(x)); }, {x}, 1e-6);
  CHECK(r.max_rel_error < 1e-6);
  CHECK(code_of<float>([] { max_pool2(Tensor<float>::zeros({1, 1, 3, 4})); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("global_avg_pool: mean and uniform gradient", "[tensor][pool]") {
  CHECK(global_avg_pool(Tensor<float>({1, 1, 2, 2}, {1, 3, 5, 7})).item() == 4.0f);
  CHECK(global_avg_pool(Tensor<float>::constant({1, 1, 3, 3}, 1.75f)).item() == 1.75f);

  auto x = Tensor<double>::uniform({1, 4, 6, 6}, -1, 1, 51);
  x.set_requires_grad(true);
  Tape<double> tape;
  {
    TapeScope<double> scope(tape);
    const auto y = global_avg_pool(x);
    for (std::int64_t c = 0; c < 4; ++c) {
      double acc = 0.0;
      for (std::int64_t h = 0; h < 6; ++h)
        for (std::int64_t w = 0; w < 6; ++w) acc += x.at(0, c, h, w);
      CHECK(y.at(0, c, 0, 0) == Approx(acc / 36.0).epsilon(1e-14));
    }
    backward(sum(y), tape);
  }
  for (double g : x.grad()) CHECK(g == Approx(1.0 / 36.0).epsilon(1e-14));
}

TEST_CASE("upsample: nearest replication, bilinear constants and oracle", "[tensor][upsample]") {
  const Tensor<float> x({1, 1, 2, 2}, {1, 2, 3, 4});
  const auto near = upsample(x, 2, UpsampleMode::Nearest);
  CHECK(values(near) == std::vector<float>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4});
  const auto flat = upsample(Tensor<float>::constant({1, 2, 3, 3}, 0.3f), 2, UpsampleMode::Bilinear);
  for (float v : flat.data()) CHECK(v == Approx(0.3f).epsilon(1e-6));

  auto r = Tensor<double>::uniform({1, 1, 4, 4}, -1, 1, 61);
  const auto y = upsample(r, 2, UpsampleMode::Bilinear);
  REQUIRE(y.shape() == Shape{1, 1, 8, 8});
  // Direct per-pixel interpolation with half-pixel centres and edge clamping.
  for (int oh = 0; oh < 8; ++oh)
    for (int ow = 0; ow < 8; ++ow) {
      const double sy = std::clamp((oh + 0.5) / 2.0 - 0.5, 0.0, 3.0);
      const double sx = std::clamp((ow + 0.5) / 2.0 - 0.5, 0.0, 3.0);
      const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
      const int y1 = std::min(y0 + 1, 3), x1 = std::min(x0 + 1, 3);
      const double fy = sy - y0, fx = sx - x0;
      const double want = (1 - fy) * ((1 - fx) * r.at(0, 0, y0, x0) + fx * r.at(0, 0, y0, x1)) +
                          fy * ((1 - fx) * r.at(0, 0, y1, x0) + fx * r.at(0, 0, y1, x1));
      CHECK(y.at(0, 0, oh, ow) == Approx(want).epsilon(1e-12));
    }
  const auto fd = test::finite_difference_check<double>(
      [&] { return test::probe(upsample(r, 2, UpsampleMode::Bilinear)); }, {r}, 1e-6);
  CHECK(fd.max_rel_error < 1e-6);
  const auto fd4 = test::finite_difference_check<double>(
      [&] { return test::probe(upsample(r, 4, UpsampleMode::Nearest)); }, {r}, 1e-6);
  CHECK(fd4.max_rel_error < 1e-6);
  CHECK(code_of<float>([&] { upsample(x, 1, UpsampleMode::Bilinear); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("activations", "[tensor][activation]") {
  CHECK(sigmoid(Tensor<float>({1, 1, 1, 1}, {0.0f})).item() == 0.5f);
  const auto r = relu(Tensor<float>({1, 1, 1, 2}, {-3.0f, 3.0f}));
  CHECK(values(r) == std::vector<float>{0.0f, 3.0f});
  const auto s = sigmoid(Tensor<float>({1, 1, 1, 2}, {-100.0f, 100.0f}));
  for (float v : s.data()) {
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  auto x = Tensor<double>::uniform({1, 2, 3, 3}, -2, 2, 71);
  const auto fd = test::finite_difference_check<double>(
      [&] { return test::probe(sigmoid(x)) ; }, {x}, 1e-6);
  CHECK(fd.max_rel_error < 1e-6);
  const auto fdr = test::finite_difference_check<double>(
      [&] { return test::probe(relu(x)); }, {x}, 1e-6);
  CHECK(fdr.max_rel_error < 1e-6);
}

TEST_CASE("dense: identity, hand arithmetic, matrix oracle, gradients", "[tensor][dense]") {
  const Tensor<float> x({1, 2, 1, 1}, {1, 2});
  const Tensor<float> eye({2, 2, 1, 1}, {1, 0, 0, 1});
  CHECK(values(dense(x, eye, Tensor<float>::zeros({2, 1, 1, 1}))) == std::vector<float>{1, 2});
  const Tensor<float> w({2, 2, 1, 1}, {1, 1, 1, -1});
  CHECK(values(dense(x, w, Tensor<float>::zeros({2, 1, 1, 1}))) == std::vector<float>{3, -1});

  auto xr = Tensor<double>::uniform({2, 8, 1, 1}, -1, 1, 81);
  auto wr = Tensor<double>::uniform({5, 8, 1, 1}, -1, 1, 82);
  auto br = Tensor<double>::uniform({5, 1, 1, 1}, -1, 1, 83);
  const auto y = dense(xr, wr, br);
  for (int n = 0; n < 2; ++n)
    for (int o = 0; o < 5; ++o) {
      double acc = br.at(o, 0, 0, 0);
      for (int i = 0; i < 8; ++i) acc += wr.at(o, i, 0, 0) * xr.at(n, i, 0, 0);
      CHECK(y.at(n, o, 0, 0) == Approx(acc).epsilon(1e-12));
    }
  const auto fd = test::finite_difference_check<double>(
      [&] { return test::probe(dense(xr, wr, br)); }, {xr, wr, br}, 1e-6);
  CHECK(fd.max_rel_error < 1e-6);
  CHECK(code_of<float>([] {
          dense(Tensor<float>::zeros({1, 2, 2, 1}), Tensor<float>::zeros({2, 2, 1, 1}), Tensor<float>());
        }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("concat_channels: layout, identity and split round trip", "[tensor][concat]") {
  const auto a = Tensor<float>::uniform({1, 2, 4, 4}, -1, 1, 91);
  const auto b = Tensor<float>::uniform({1, 3, 4, 4}, -1, 1, 92);
  const std::vector<Tensor<float>> both{a, b};
  const auto cat = concat_channels<float>(both);
  CHECK(cat.shape() == Shape{1, 5, 4, 4});
  const std::vector<Tensor<float>> one{a};
  CHECK(values(concat_channels<float>(one)) == values(a));
  CHECK(values(slice_channels(cat, 0, 2)) == values(a));
  CHECK(values(slice_channels(cat, 2, 3)) == values(b));

  auto p = Tensor<double>::uniform({2, 2, 3, 3}, -1, 1, 93);
  auto q = Tensor<double>::uniform({2, 1, 3, 3}, -1, 1, 94);
  const auto fd = test::finite_difference_check<double>(
      [&] {
        const std::vector<Tensor<double>> xs{p, q};
        return test::probe(concat_channels<double>(xs));
      },
      {p, q}, 1e-6);
  CHECK(fd.max_rel_error < 1e-6);
  const std::vector<Tensor<float>> bad{a, Tensor<float>::zeros({1, 1, 2, 4})};
  CHECK(code_of<float>([&] { concat_channels<float>(bad); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("backward: linear and quadratic functionals, scalar guard", "[tensor][backward]") {
  auto x = Tensor<double>::uniform({2, 3, 2, 2}, -1, 1, 101);
  x.set_requires_grad(true);
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    backward(sum(x), tape);
  }
  for (double g : x.grad()) CHECK(g == 1.0);
  x.zero_grad();
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    backward(scale(sum(mul(x, x)), 0.5), tape);
  }
  for (std::size_t i = 0; i < x.grad().size(); ++i) CHECK(x.grad()[i] == Approx(x.data()[i]).epsilon(1e-14));

  // Gradients accumulate across passes until the caller zeroes them.
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    backward(sum(x), tape);
  }
  for (std::size_t i = 0; i < x.grad().size(); ++i) CHECK(x.grad()[i] == Approx(x.data()[i] + 1.0).epsilon(1e-14));

  Tape<double> tape;
  CHECK(code_of<double>([&] { backward(x, tape); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("tape: recording order is topological", "[tensor][tape]") {
  auto w = Tensor<float>::uniform({2, 1, 3, 3}, -1, 1, 111);
  w.set_requires_grad(true);
  const auto x = Tensor<float>::uniform({1, 1, 8, 8}, -1, 1, 112);
  Tape<float> tape;
  TapeScope<float> scope(tape);
  const auto y = sum(sigmoid(max_pool2(relu(conv2d(x, w, Tensor<float>(), {1, 1, 1})))));
  std::set<TensorId> produced;
  for (const auto& node : tape.nodes()) {
    for (TensorId in : node.inputs) {
      const bool leaf = in == x.id() || in == w.id();
      CHECK((leaf || produced.count(in) == 1));
    }
    CHECK(produced.insert(node.output).second);
  }
  CHECK(tape.nodes().back().output == y.id());
  CHECK(tape.size() == 5);
}

TEST_CASE("determinism: repeated evaluation is bit-identical", "[tensor]") {
  const auto x = Tensor<float>::uniform({2, 3, 16, 16}, -1, 1, 121);
  const auto k = Tensor<float>::uniform({8, 3, 3, 3}, -1, 1, 122);
  const auto a = conv2d(x, k, Tensor<float>(), {1, 2, 2});
  const auto b = conv2d(x, k, Tensor<float>(), {1, 2, 2});
  CHECK(values(a) == values(b));
}

TEST_CASE("FTEN: exact header bytes", "[tensor][ften]") {
  const Tensor<float> t({1, 1, 1, 2}, {1.0f, -2.0f});
  std::ostringstream os;
  write_ften(os, t);
  const std::string bytes = os.str();
  REQUIRE(bytes.size() == 4 + 1 + 1 + 1 + 5 + 4 * 8 + 2 * 4);
  CHECK(bytes.substr(0, 4) == "FTEN");
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 0);
  CHECK(bytes[6] == 4);
  for (int i = 7; i < 12; ++i) CHECK(bytes[static_cast<std::size_t>(i)] == 0);
  CHECK(static_cast<unsigned char>(bytes[12 + 24]) == 2);  // w extent, LE
  // 1.0f = 0x3F800000 little-endian.
  CHECK(static_cast<unsigned char>(bytes[44 + 3]) == 0x3F);
  CHECK(static_cast<unsigned char>(bytes[44 + 2]) == 0x80);
}

TEST_CASE("FTEN: round trip preserves shape and bits for random tensors", "[tensor][ften][property]") {
  std::mt19937_64 rng(123);
  for (int trial = 0; trial < 25; ++trial) {
    std::uniform_int_distribution<int> ext(1, 5);
    const Shape s{ext(rng), ext(rng), ext(rng), ext(rng)};
    const auto f = Tensor<float>::uniform(s, -1e3f, 1e3f, rng());
    const auto d = Tensor<double>::uniform(s, -1e3, 1e3, rng());
    std::stringstream ss;
    write_ften(ss, f);
    write_ften(ss, d);
    CHECK(peek_ften_dtype(ss) == Dtype::F32);
    const auto f2 = read_ften<float>(ss);
    CHECK(peek_ften_dtype(ss) == Dtype::F64);
    const auto d2 = read_ften<double>(ss);
    CHECK(f2.shape() == s);
    CHECK(values(f2) == values(f));
    CHECK(values(d2) == values(d));
  }
}

TEST_CASE("FTEN: malformed input", "[tensor][ften]") {
  std::stringstream bad("FTEX\x01\x00\x04");
  CHECK(code_of<float>([&] { read_ften<float>(bad); }) == ErrorCode::Io);
  std::ostringstream os;
  write_ften(os, Tensor<float>::zeros({1, 1, 2, 2}));
  std::stringstream truncated(os.str().substr(0, os.str().size() - 3));
  CHECK(code_of<float>([&] { read_ften<float>(truncated); }) == ErrorCode::Io);
  // Lower-rank records pad trailing extents.
  std::string rank1 = "FTEN";
  rank1 += std::string("\x01\x01\x01\x00\x00\x00\x00\x00", 8);
  rank1 += std::string("\x02\x00\x00\x00\x00\x00\x00\x00", 8);
  const double vals[2] = {0.25, -4.0};
  rank1.append(reinterpret_cast<const char*>(vals), sizeof(vals));
  std::stringstream r1(rank1);
  const auto t = read_ften<double>(r1);
  CHECK(t.shape() == Shape{2, 1, 1, 1});
  CHECK(t.data()[1] == -4.0);
}
