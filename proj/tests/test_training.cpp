// Copyright 2026 The fudsa Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "common/error.hpp"
#include "tensor/tape.hpp"
#include "train/training.hpp"

using namespace fudsa;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an fudsa::Error");
  return ErrorCode::Io;
}

std::string message_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("fudsa_train_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

NetworkConfig tiny_net() {
  NetworkConfig n;
  n.levels = 2;
  n.base_channels = 4;
  return n;
}

std::vector<SamplePair> phantoms(std::uint64_t first, int count, std::int64_t size) {
  PhantomOptions opt;
  opt.size = size;
  std::vector<SamplePair> out;
  for (int i = 0; i < count; ++i) out.push_back(phantom_pair(synth_phantom(first + i, opt)));
  return out;
}

template <typename T>
bool same(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

NamedParam<double> scalar_param(double value) {
  Tensor<double> t(Shape{1, 1, 1, 1}, {value});
  t.set_requires_grad(true);
  return {"p", t};
}

}  // namespace

TEST_CASE("adam: zero gradient leaves parameters unchanged", "[train][adam]") {
  auto model = FudsaNet<double>::build(tiny_net(), 3);
  const auto params = model.parameters();
  std::vector<Tensor<double>> before;
  for (const auto& p : params) before.push_back(p.tensor.clone());
  model.zero_grad();
  auto st = AdamState<double>::for_params(params);
  adam_step(params, st, TrainConfig{});
  CHECK(st.t == 1);
  for (std::size_t i = 0; i < params.size(); ++i) CHECK(same(params[i].tensor, before[i]));
}

TEST_CASE("adam: scalar first step and two-step oracle", "[train][adam]") {
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  ParamList<double> ps{scalar_param(0.0)};
  auto st = AdamState<double>::for_params(ps);
  ps[0].tensor.mutable_grad()[0] = 1.0;
  adam_step(ps, st, cfg);
  CHECK(ps[0].tensor.item() == Catch::Approx(-0.1).margin(1e-6));

  // Hand-rolled scalar Adam.
  const double g = 0.37;
  double p = 1.5, m = 0, v = 0;
  ParamList<double> qs{scalar_param(p)};
  auto qst = AdamState<double>::for_params(qs);
  for (int t = 1; t <= 2; ++t) {
    m = cfg.beta1 * m + (1 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
    const double mh = m / (1 - std::pow(cfg.beta1, t));
    const double vh = v / (1 - std::pow(cfg.beta2, t));
    p -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.eps);
    qs[0].tensor.mutable_grad()[0] = g;
    adam_step(qs, qst, cfg);
    CHECK(std::abs(qs[0].tensor.item() - p) < 1e-12);
  }
  CHECK(qst.t == 2);
}

TEST_CASE("adam: state drift is rejected", "[train][adam]") {
  ParamList<double> ps{scalar_param(0.0)};
  auto st = AdamState<double>::for_params(ps);
  ParamList<double> two{scalar_param(0.0), scalar_param(1.0)};
  CHECK(code_of([&] { adam_step(two, st, TrainConfig{}); }) == ErrorCode::InvalidState);
  Tensor<double> wide(Shape{1, 2, 1, 1});
  wide.set_requires_grad(true);
  ParamList<double> reshaped{{"p", wide}};
  CHECK(code_of([&] { adam_step(reshaped, st, TrainConfig{}); }) == ErrorCode::InvalidState);
  ParamList<double> renamed{{"q", scalar_param(0.0).tensor}};
  CHECK(code_of([&] { adam_step(renamed, st, TrainConfig{}); }) == ErrorCode::InvalidState);
}

TEST_CASE("train: stopping rule, determinism and best restoration", "[train]") {
  const auto data = phantoms(100, 6, 16);
  const std::vector<SamplePair> tr(data.begin(), data.begin() + 4);
  const std::vector<SamplePair> va(data.begin() + 4, data.end());
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.seed = 5;

  SECTION("patience 1 with no qualifying improvement stops at epoch 2") {
    cfg.patience = 1;
    cfg.min_delta = 1e9;
    auto model = FudsaNet<float>::build(tiny_net(), 1);
    const auto rep = train(model, tr, va, cfg);
    CHECK(rep.epochs.size() == 2);
    CHECK(rep.stopped_early);
    CHECK(rep.best_epoch == 1);
  }

  SECTION("identical seeds give identical reports; model holds the best parameters") {
    cfg.max_epochs = 6;
    auto a = FudsaNet<float>::build(tiny_net(), 1);
    auto b = FudsaNet<float>::build(tiny_net(), 1);
    const auto ra = train(a, tr, va, cfg);
    const auto rb = train(b, tr, va, cfg);
    REQUIRE(ra.epochs.size() == rb.epochs.size());
    for (std::size_t i = 0; i < ra.epochs.size(); ++i) {
      CHECK(ra.epochs[i].train_loss == rb.epochs[i].train_loss);
      CHECK(ra.epochs[i].val_loss == rb.epochs[i].val_loss);
      CHECK(ra.epochs[i].val == rb.epochs[i].val);
    }
    CHECK(report_csv(ra) == report_csv(rb));
    const double best = evaluate(a, va, cfg.loss, cfg.batch_size).mean_loss;
    CHECK(best == ra.best_val_loss);
    for (const auto& e : ra.epochs) CHECK(best <= e.val_loss);
    CHECK(ra.last.adam.t == 6);
  }

  SECTION("different shuffle seeds change the curve") {
    cfg.max_epochs = 2;
    cfg.batch_size = 2;
    auto a = FudsaNet<float>::build(tiny_net(), 1);
    auto b = FudsaNet<float>::build(tiny_net(), 1);
    const auto ra = train(a, tr, va, cfg);
    cfg.seed = 6;
    const auto rb = train(b, tr, va, cfg);
    CHECK(ra.epochs[1].train_loss != rb.epochs[1].train_loss);
  }
}

TEST_CASE("train: single repeated sample loss is non-increasing", "[train]") {
  const auto one = phantoms(7, 1, 16);
  TrainConfig cfg;
  cfg.max_epochs = 50;
  cfg.patience = 1000;
  cfg.batch_size = 1;
  auto model = FudsaNet<float>::build(tiny_net(), 2);
  const auto rep = train(model, one, one, cfg);
  REQUIRE(rep.epochs.size() == 50);
  for (std::size_t i = 1; i < rep.epochs.size(); ++i) {
    CHECK(rep.epochs[i].train_loss <= rep.epochs[i - 1].train_loss + 1e-3);
  }
  CHECK(rep.epochs.back().train_loss < rep.epochs.front().train_loss);
}

TEST_CASE("train: non-finite loss aborts naming epoch and batch", "[train]") {
  const auto data = phantoms(20, 3, 16);
  auto model = FudsaNet<float>::build(tiny_net(), 1);
  for (auto& p : model.parameters()) {
    if (p.name == "head.final.bias") p.tensor.mutable_data()[0] = std::nanf("");
  }
  std::string msg;
  try {
    (void)train(model, data, data, TrainConfig{});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NumericalDivergence);
    msg = e.what();
  }
  CHECK(msg.find("epoch 1") != std::string::npos);
  CHECK(msg.find("batch 1") != std::string::npos);
}

TEST_CASE("train: preconditions", "[train]") {
  auto model = FudsaNet<float>::build(tiny_net(), 1);
  const auto data = phantoms(1, 2, 16);
  CHECK(code_of([&] { (void)train(model, {}, data, TrainConfig{}); }) == ErrorCode::InvalidArgument);
  TrainConfig bad;
  bad.learning_rate = 0;
  CHECK(code_of([&] { (void)train(model, data, data, bad); }) == ErrorCode::InvalidArgument);
  const auto odd = phantoms(1, 1, 18);
  CHECK(code_of([&] { (void)train(model, odd, odd, TrainConfig{}); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("evaluate: purity, pooled counts, constant-zero model", "[train][eval]") {
  const auto data = phantoms(40, 5, 16);
  auto model = FudsaNet<float>::build(tiny_net(), 4);
  const auto before = model.parameters()[0].tensor.clone();
  const auto r1 = evaluate(model, data, LossConfig{}, 2);
  const auto r2 = evaluate(model, data, LossConfig{}, 2);
  CHECK(r1.metrics == r2.metrics);
  CHECK(r1.mean_loss == r2.mean_loss);
  CHECK(same(before, model.parameters()[0].tensor));
  CHECK(r1.n_images == 5);

  // Pooling happens on counts before ratios.
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (const auto& sp : data) {
    const auto m = evaluate(model, {sp}, LossConfig{}, 1).metrics;
    tp += m.tp, fp += m.fp, fn += m.fn, tn += m.tn;
  }
  CHECK(r1.metrics == MetricsRecord::from_counts(tp, fp, fn, tn));

  for (auto& p : model.parameters()) {
    if (p.name.rfind("head.", 0) == 0) {
      const bool bias = p.name.find(".bias") != std::string::npos;
      for (auto& v : p.tensor.mutable_data()) v = bias ? -60.0f : 0.0f;
    }
  }
  const auto zero = evaluate(model, data, LossConfig{}, 3).metrics;
  CHECK(zero.tp == 0);
  CHECK(zero.fp == 0);
  CHECK(zero.fn > 0);
  CHECK(zero.recall == 0.0);
}

TEST_CASE("evaluate: pooled and per-image DSC differ on a tiny and a large lesion", "[train][eval]") {
  // Image A: 4-pixel lesion, prediction hits 1 of them. Image B: 64-pixel
  // lesion, prediction hits all and adds 8 false positives.
  Tensor<float> y(Shape{2, 1, 16, 16});
  Tensor<float> p(Shape{2, 1, 16, 16});
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) y.mutable_data()[y.offset(0, 0, r, c)] = 1;
  p.mutable_data()[p.offset(0, 0, 0, 0)] = 1;
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) {
      y.mutable_data()[y.offset(1, 0, r, c)] = 1;
      p.mutable_data()[p.offset(1, 0, r, c)] = 1;
    }
  for (int c = 0; c < 8; ++c) p.mutable_data()[p.offset(1, 0, 8, c)] = 1;
  const auto pooled = segmentation_metrics(p, y);
  // tp = 1 + 64, fp = 8, fn = 3.
  CHECK(pooled.tp == 65);
  CHECK(pooled.fp == 8);
  CHECK(pooled.fn == 3);
  CHECK(pooled.dsc == Catch::Approx(130.0 / 141.0).epsilon(1e-12));
  const double dsc_a = 2.0 / (2.0 + 3.0);
  const double dsc_b = 128.0 / 136.0;
  CHECK(std::abs(pooled.dsc - 0.5 * (dsc_a + dsc_b)) > 0.2);
}

TEST_CASE("report csv format", "[train]") {
  EpochRecord e;
  e.epoch = 3;
  e.train_loss = 0.25;
  e.val_loss = 0.5;
  e.val = MetricsRecord::from_counts(3, 1, 2, 10);
  CHECK(report_csv_header() == "epoch,train_loss,val_loss,val_dsc,val_iou,val_recall");
  CHECK(report_csv_row(e) == "3,0.250000,0.500000,0.6667,0.5000,0.6000");
  TrainReport<float> r;
  r.epochs = {e};
  r.best_epoch = 3;
  r.best_val_loss = 0.5;
  const std::string csv = report_csv(r);
  CHECK(csv.rfind("epoch,train_loss", 0) == 0);
  CHECK(csv.find("# best_epoch=3 best_val_loss=0.500000 epochs_run=1 stopped_early=false") != std::string::npos);
}

TEST_CASE("checkpoint: byte-stable round trip, exact forward, resume", "[train][checkpoint]") {
  const fs::path dir = scratch("ckpt");
  const auto data = phantoms(60, 4, 16);
  RunConfig rc;
  rc.network = tiny_net();
  rc.network.variant = VariantFlags::from_name("III");
  rc.size = 16;
  TrainConfig cfg;
  cfg.max_epochs = 2;
  cfg.learning_rate = 1e-3;
  auto model = FudsaNet<float>::build(rc.network, 9);
  const auto rep = train(model, data, data, cfg);
  save_checkpoint(dir / "a.fud", model, rep.best.adam, rc);

  auto ck = load_checkpoint<float>(dir / "a.fud");
  CHECK(ck.config.to_text() == rc.to_text());
  CHECK(ck.adam.t == rep.best.adam.t);
  save_checkpoint(dir / "b.fud", ck.model, ck.adam, ck.config);
  CHECK(slurp(dir / "a.fud") == slurp(dir / "b.fud"));

  const Batch<float> b = make_batch<float>(data, {0, 1, 2, 3});
  NoTapeScope<float> no_tape;
  const auto o1 = model.forward(b.images);
  const auto o2 = ck.model.forward(b.images);
  CHECK(same(o1.final_map, o2.final_map));
  REQUIRE(o1.side_maps.size() == o2.side_maps.size());
  for (std::size_t i = 0; i < o1.side_maps.size(); ++i) CHECK(same(o1.side_maps[i], o2.side_maps[i]));

  // Resumed steps continue the counter.
  const auto params = ck.model.parameters();
  ck.model.zero_grad();
  adam_step(params, ck.adam, cfg);
  CHECK(ck.adam.t == rep.best.adam.t + 1);
  fs::remove_all(dir);
}

TEST_CASE("checkpoint: corruption is detected", "[train][checkpoint]") {
  const fs::path dir = scratch("corrupt");
  RunConfig rc;
  rc.network = tiny_net();
  auto model = FudsaNet<double>::build(rc.network, 1);
  const auto adam = AdamState<double>::for_params(model.parameters());
  save_checkpoint(dir / "ok.fud", model, adam, rc);
  const std::string good = slurp(dir / "ok.fud");
  auto write = [&](const std::string& name, const std::string& bytes) {
    std::ofstream(dir / name, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    return dir / name;
  };

  std::string bad_magic = good;
  bad_magic[0] = 'X';
  CHECK(code_of([&] { (void)load_checkpoint<double>(write("m.fud", bad_magic)); }) ==
        ErrorCode::CorruptCheckpoint);
  for (const std::size_t cut : {std::size_t{6}, good.size() / 2, good.size() - 3}) {
    CHECK(code_of([&] { (void)load_checkpoint<double>(write("t.fud", good.substr(0, cut))); }) ==
          ErrorCode::CorruptCheckpoint);
  }
  std::string renamed = good;
  const auto at = renamed.find("param/encoder1");
  REQUIRE(at != std::string::npos);
  renamed[at + 6] = 'X';
  const std::string msg = message_of([&] { (void)load_checkpoint<double>(write("n.fud", renamed)); });
  CHECK(msg.find("Xncoder1") != std::string::npos);
  CHECK(code_of([&] { (void)load_checkpoint<double>(write("n.fud", renamed)); }) ==
        ErrorCode::CorruptCheckpoint);
  CHECK(code_of([&] { (void)load_checkpoint<double>(dir / "missing.fud"); }) == ErrorCode::Io);
  fs::remove_all(dir);
}

TEST_CASE("gradcheck harness: passes, lists every tensor once, catches a broken rule", "[train][gradcheck]") {
  GradcheckOptions opt;
  opt.levels = 2;
  opt.channels = 2;
  opt.size = 16;
  opt.coords_per_tensor = 6;
  const auto ok = run_gradcheck(opt);
  CHECK(ok.passed);
  CHECK(ok.max_rel_error < 1e-5);

  NetworkConfig nc;
  nc.levels = 2;
  nc.base_channels = 2;
  const auto params = FudsaNet<double>::build(nc, 0).parameters();
  REQUIRE(ok.rows.size() == params.size());
  std::set<std::string> seen;
  for (std::size_t i = 0; i < params.size(); ++i) {
    CHECK(ok.rows[i].name == params[i].name);
    CHECK(ok.rows[i].coords >= 1);
    seen.insert(ok.rows[i].name);
  }
  CHECK(seen.size() == params.size());

  testing::set_backward_fault(true);
  const auto broken = run_gradcheck(opt);
  testing::set_backward_fault(false);
  CHECK_FALSE(broken.passed);
  CHECK(broken.max_rel_error > 1e-3);
}
