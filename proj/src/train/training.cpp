// Copyright 2026 The fudsa Authors
// SPDX-License-Identifier: Apache-2.0

#include "train/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#if defined(__SSE2__)
#include <xmmintrin.h>
#endif

#include "common/error.hpp"
#include "tensor/ften.hpp"
#include "tensor/ops.hpp"
#include "tensor/tape.hpp"

namespace fudsa {

// ---- Adam -----------------------------------------------------------------

template <typename T>
AdamState<T> AdamState<T>::for_params(const ParamList<T>& params) {
  AdamState s;
  for (const auto& p : params) {
    s.names.push_back(p.name);
    s.m.push_back(Tensor<T>::zeros(p.tensor.shape()));
    s.v.push_back(Tensor<T>::zeros(p.tensor.shape()));
  }
  return s;
}

template <typename T>
AdamState<T> AdamState<T>::clone() const {
  AdamState s;
  s.names = names;
  s.t = t;
  for (const auto& x : m) s.m.push_back(x.clone());
  for (const auto& x : v) s.v.push_back(x.clone());
  return s;
}

template <typename T>
void adam_step(const ParamList<T>& params, AdamState<T>& state, const TrainConfig& cfg) {
  if (params.size() != state.names.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    fail(ErrorCode::InvalidState, "adam state holds " + std::to_string(state.names.size()) +
                                      " tensors, model has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (p.name != state.names[i] || !(p.tensor.shape() == state.m[i].shape()) ||
        !(p.tensor.shape() == state.v[i].shape())) {
      fail(ErrorCode::InvalidState, "adam state drifted at parameter '" + p.name + "'");
    }
    if (!p.tensor.requires_grad()) {
      fail(ErrorCode::InvalidState, "parameter '" + p.name + "' does not track gradients");
    }
  }
  state.t += 1;
  const double b1 = cfg.beta1;
  const double b2 = cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T> w = params[i].tensor;
    auto g = w.grad();
    auto x = w.mutable_data();
    auto m = state.m[i].mutable_data();
    auto v = state.v[i].mutable_data();
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double gk = g[k];
      const double mk = b1 * m[k] + (1.0 - b1) * gk;
      const double vk = b2 * v[k] + (1.0 - b2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double mhat = mk / c1;
      const double vhat = vk / c2;
      x[k] = static_cast<T>(x[k] - cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

// ---- batches and evaluation ----------------------------------------------

template <typename T>
Batch<T> make_batch(const std::vector<SamplePair>& set, const std::vector<std::size_t>& indices) {
  if (indices.empty()) fail(ErrorCode::InvalidArgument, "empty batch");
  const Shape s0 = set.at(indices[0]).image.shape();
  const std::int64_t n = static_cast<std::int64_t>(indices.size());
  const Shape bs{n, s0.c, s0.h, s0.w};
  const Shape ms{n, 1, s0.h, s0.w};
  Batch<T> b{Tensor<T>::zeros(bs), Tensor<T>::zeros(ms)};
  auto bi = b.images.mutable_data();
  auto bm = b.masks.mutable_data();
  const std::size_t per_img = static_cast<std::size_t>(s0.c * s0.h * s0.w);
  const std::size_t per_mask = static_cast<std::size_t>(s0.h * s0.w);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const SamplePair& sp = set.at(indices[k]);
    if (!(sp.image.shape() == s0) || sp.mask.shape() != Shape{1, 1, s0.h, s0.w}) {
      fail(ErrorCode::ShapeMismatch, "sample '" + sp.id + "' has shape " + sp.image.shape().str() +
                                         ", batch expects " + s0.str());
    }
    std::copy(sp.image.data().begin(), sp.image.data().end(), bi.begin() + k * per_img);
    std::copy(sp.mask.data().begin(), sp.mask.data().end(), bm.begin() + k * per_mask);
  }
  return b;
}

namespace {

// Denormal floats show up in saturated sigmoid tails and Adam moments and cost
// ~2x in throughput. Flush them for the duration of a loop; restores on exit.
class FlushDenormals {
 public:
#if defined(__SSE2__)
  FlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }  // FTZ | DAZ
  ~FlushDenormals() { _mm_setcsr(saved_); }

 private:
  unsigned saved_;
#endif
};

}  // namespace

template <typename T>
EvalResult evaluate(const FudsaNet<T>& model, const std::vector<SamplePair>& set,
                    const LossConfig& loss, int batch_size, double threshold) {
  if (set.empty()) fail(ErrorCode::InvalidArgument, "evaluate on an empty set");
  if (batch_size < 1) fail(ErrorCode::InvalidArgument, "batch_size must be >= 1");
  const FlushDenormals ftz;
  NoTapeScope<T> no_tape;
  EvalResult r;
  r.metrics = MetricsRecord::from_counts(0, 0, 0, 0);
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < set.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(set.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Batch<T> b = make_batch<T>(set, idx);
    const auto out = model.forward(b.images);
    loss_sum += static_cast<double>(supervised_loss(out, b.masks, loss).item()) *
                static_cast<double>(idx.size());
    r.metrics += segmentation_metrics(threshold_mask(out.final_map, threshold), b.masks);
  }
  r.n_images = static_cast<std::int64_t>(set.size());
  r.mean_loss = loss_sum / static_cast<double>(set.size());
  return r;
}

// ---- training -------------------------------------------------------------

namespace {

template <typename T>
std::vector<Tensor<T>> snapshot_params(const FudsaNet<T>& model) {
  std::vector<Tensor<T>> out;
  for (const auto& p : model.parameters()) out.push_back(p.tensor.clone());
  return out;
}

}  // namespace

template <typename T>
void restore_snapshot(FudsaNet<T>& model, const ModelSnapshot<T>& snapshot) {
  auto params = model.parameters();
  if (params.size() != snapshot.params.size()) {
    fail(ErrorCode::InvalidState, "snapshot does not match the model's parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!(params[i].tensor.shape() == snapshot.params[i].shape())) {
      fail(ErrorCode::InvalidState, "snapshot shape mismatch at '" + params[i].name + "'");
    }
    auto dst = params[i].tensor.mutable_data();
    auto src = snapshot.params[i].data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

template <typename T>
TrainReport<T> train(FudsaNet<T>& model, const std::vector<SamplePair>& train_set,
                     const std::vector<SamplePair>& val_set, const TrainConfig& cfg,
                     const EpochCallback& on_epoch, const AdamState<T>* resume) {
  cfg.validate();
  if (train_set.empty() || val_set.empty()) {
    fail(ErrorCode::InvalidArgument, "training needs nonempty train and validation sets");
  }
  for (const auto* set : {&train_set, &val_set}) {
    for (const auto& sp : *set) {
      sp.validate();
      model.config().check_input_extents(sp.image.shape().h, sp.image.shape().w);
    }
  }

  const FlushDenormals ftz;
  TrainReport<T> report;
  report.best_val_loss = std::numeric_limits<double>::infinity();
  AdamState<T> adam = resume ? resume->clone() : AdamState<T>::for_params(model.parameters());
  model.zero_grad();

  std::vector<std::size_t> order(train_set.size());
  int stale = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(cfg.seed ^ static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    int batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      ++batch_no;
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(end));
      const Batch<T> b = make_batch<T>(train_set, idx);
      Tape<T> tape;
      Tensor<T> loss;
      {
        TapeScope<T> scope(tape);
        const auto out = model.forward(b.images);
        loss = supervised_loss(out, b.masks, cfg.loss);
      }
      const double lv = static_cast<double>(loss.item());
      if (!std::isfinite(lv)) {
        fail(ErrorCode::NumericalDivergence, "non-finite loss at epoch " + std::to_string(epoch) +
                                                 ", batch " + std::to_string(batch_no));
      }
      backward(loss, tape);
      adam_step(model.parameters(), adam, cfg);
      model.zero_grad();
      loss_sum += lv * static_cast<double>(idx.size());
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train_set.size());
    const EvalResult ev = evaluate(model, val_set, cfg.loss, cfg.batch_size);
    rec.val_loss = ev.mean_loss;
    rec.val = ev.metrics;
    if (!std::isfinite(rec.val_loss)) {
      fail(ErrorCode::NumericalDivergence, "non-finite validation loss at epoch " + std::to_string(epoch));
    }
    report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.val_loss < report.best_val_loss - cfg.min_delta) {
      report.best_val_loss = rec.val_loss;
      report.best_epoch = epoch;
      report.best = ModelSnapshot<T>{snapshot_params(model), adam.clone()};
      stale = 0;
    } else if (++stale >= cfg.patience) {
      report.stopped_early = true;
      break;
    }
  }
  report.last = ModelSnapshot<T>{snapshot_params(model), adam.clone()};
  restore_snapshot(model, report.best);
  return report;
}

// ---- report ---------------------------------------------------------------

std::string report_csv_header() { return "epoch,train_loss,val_loss,val_dsc,val_iou,val_recall"; }

std::string report_csv_row(const EpochRecord& e) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.4f,%.4f,%.4f", e.epoch, e.train_loss, e.val_loss,
                e.val.dsc, e.val.iou, e.val.recall);
  return buf;
}

template <typename T>
std::string report_csv(const TrainReport<T>& report) {
  std::string out = report_csv_header() + "\n";
  for (const auto& e : report.epochs) out += report_csv_row(e) + "\n";
  char buf[256];
  std::snprintf(buf, sizeof buf, "# best_epoch=%d best_val_loss=%.6f epochs_run=%zu stopped_early=%s\n",
                report.best_epoch, report.best_val_loss, report.epochs.size(),
                report.stopped_early ? "true" : "false");
  return out + buf;
}

// ---- checkpoints ----------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'F', 'U', 'D', '1'};

void put_u16(std::ostream& o, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>(v >> 8)};
  o.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& o, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  o.write(reinterpret_cast<const char*>(b), 4);
}

[[noreturn]] void corrupt(const std::filesystem::path& path, const std::string& why) {
  fail(ErrorCode::CorruptCheckpoint, path.string() + ": " + why);
}

std::uint32_t get_u32(std::istream& in, const std::filesystem::path& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) corrupt(path, "truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint16_t get_u16(std::istream& in, const std::filesystem::path& path) {
  unsigned char b[2];
  if (!in.read(reinterpret_cast<char*>(b), 2)) corrupt(path, "truncated");
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

template <typename T>
void put_entry(std::ostream& o, const std::string& name, const Tensor<T>& t) {
  put_u16(o, static_cast<std::uint16_t>(name.size()));
  o.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_ften(o, t);
}

}  // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const FudsaNet<T>& model,
                     const AdamState<T>& adam, const RunConfig& config) {
  const auto params = model.parameters();
  if (adam.names.size() != params.size()) {
    fail(ErrorCode::InvalidState, "adam state does not match the model");
  }
  std::ostringstream o(std::ios::binary);
  o.write(kMagic, 4);
  put_u32(o, static_cast<std::uint32_t>(3 * params.size() + 1));
  for (const auto& p : params) put_entry(o, "param/" + p.name, p.tensor);
  for (std::size_t i = 0; i < params.size(); ++i) put_entry(o, "adam/m/" + params[i].name, adam.m[i]);
  for (std::size_t i = 0; i < params.size(); ++i) put_entry(o, "adam/v/" + params[i].name, adam.v[i]);
  put_entry(o, "adam/t", Tensor<double>(Shape{1, 1, 1, 1}, {static_cast<double>(adam.t)}));
  const std::string cfg = config.to_text();
  put_u32(o, static_cast<std::uint32_t>(cfg.size()));
  o.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorCode::Io, path.string() + ": cannot open for writing");
  const std::string bytes = o.str();
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) fail(ErrorCode::Io, path.string() + ": write failed");
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::Io, path.string() + ": cannot open checkpoint");
  char magic[4];
  if (!f.read(magic, 4)) corrupt(path, "truncated header");
  if (std::memcmp(magic, kMagic, 4) != 0) corrupt(path, "bad magic (not a FUD1 checkpoint)");
  const std::uint32_t count = get_u32(f, path);

  std::vector<std::string> names;
  std::vector<std::streampos> offsets;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t len = get_u16(f, path);
    std::string name(len, '\0');
    if (!f.read(name.data(), len)) corrupt(path, "truncated entry name");
    names.push_back(name);
    offsets.push_back(f.tellg());
    // Skip the record by parsing it; the payload type is irrelevant here.
    try {
      if (peek_ften_dtype(f) == Dtype::F64) {
        (void)read_ften<double>(f);
      } else {
        (void)read_ften<float>(f);
      }
    } catch (const Error& e) {
      corrupt(path, "entry '" + name + "': " + e.what());
    }
  }
  const std::uint32_t cfg_len = get_u32(f, path);
  std::string cfg_text(cfg_len, '\0');
  if (!f.read(cfg_text.data(), cfg_len)) corrupt(path, "truncated config block");
  if (f.peek() != std::char_traits<char>::eof()) corrupt(path, "trailing bytes after config block");

  RunConfig config;
  try {
    config = RunConfig::parse(cfg_text);
    config.network.validate();
  } catch (const Error& e) {
    corrupt(path, std::string("config block: ") + e.what());
  }

  auto model = FudsaNet<T>::build(config.network, 0);
  const auto params = model.parameters();
  if (count != 3 * params.size() + 1) {
    corrupt(path, "entry count " + std::to_string(count) + " does not match the configured model (" +
                      std::to_string(3 * params.size() + 1) + ")");
  }
  AdamState<T> adam = AdamState<T>::for_params(params);

  auto read_at = [&](std::size_t k, const std::string& want, const Shape& shape) {
    if (names[k] != want) corrupt(path, "entry " + std::to_string(k) + " is '" + names[k] + "', expected '" + want + "'");
    f.clear();
    f.seekg(offsets[k]);
    Tensor<T> t = read_ften<T>(f);
    if (!(t.shape() == shape)) corrupt(path, "entry '" + want + "' has shape " + t.shape().str());
    return t;
  };
  const std::size_t np = params.size();
  for (std::size_t i = 0; i < np; ++i) {
    const Tensor<T> t = read_at(i, "param/" + params[i].name, params[i].tensor.shape());
    Tensor<T> target = params[i].tensor;
    auto dst = target.mutable_data();
    std::copy(t.data().begin(), t.data().end(), dst.begin());
    adam.m[i] = read_at(np + i, "adam/m/" + params[i].name, params[i].tensor.shape());
    adam.v[i] = read_at(2 * np + i, "adam/v/" + params[i].name, params[i].tensor.shape());
  }
  if (names[3 * np] != "adam/t") corrupt(path, "missing adam/t entry");
  f.clear();
  f.seekg(offsets[3 * np]);
  const double t = read_ften<double>(f).data()[0];
  if (!(t >= 0.0) || t != std::floor(t)) corrupt(path, "invalid adam step counter");
  adam.t = static_cast<std::int64_t>(t);
  return Checkpoint<T>{std::move(config), std::move(model), std::move(adam)};
}

// ---- gradcheck ------------------------------------------------------------

GradcheckResult run_gradcheck(const GradcheckOptions& opt) {
  NetworkConfig nc;
  nc.levels = opt.levels;
  nc.base_channels = opt.channels;
  nc.validate();
  nc.check_input_extents(opt.size, opt.size);
  if (opt.coords_per_tensor < 1) fail(ErrorCode::InvalidArgument, "coords_per_tensor must be >= 1");
  if (!(opt.step > 0.0)) fail(ErrorCode::InvalidArgument, "finite-difference step must be > 0");

  FudsaNet<double> model = FudsaNet<double>::build(nc, opt.seed);
  auto params = model.parameters();
  // Nonzero biases so every bias path carries signal away from relu kinks.
  std::mt19937_64 rng(opt.seed + 7);
  std::uniform_real_distribution<double> small(-0.05, 0.05);
  for (auto& p : params) {
    if (p.name.size() >= 5 && p.name.compare(p.name.size() - 5, 5, ".bias") == 0) {
      for (auto& x : p.tensor.mutable_data()) x = small(rng);
    }
  }

  const Shape xs{opt.batch, nc.input_channels, opt.size, opt.size};
  const Tensor<double> x = Tensor<double>::uniform(xs, 0.0, 1.0, opt.seed + 11);
  Tensor<double> y = Tensor<double>::zeros(Shape{opt.batch, 1, opt.size, opt.size});
  {
    std::bernoulli_distribution coin(0.3);
    for (auto& v : y.mutable_data()) v = coin(rng) ? 1.0 : 0.0;
  }
  const LossConfig lc;

  auto eval_loss = [&]() {
    NoTapeScope<double> no_tape;
    return supervised_loss(model.forward(x), y, lc).item();
  };

  model.zero_grad();
  {
    Tape<double> tape;
    Tensor<double> loss;
    {
      TapeScope<double> scope(tape);
      loss = supervised_loss(model.forward(x), y, lc);
    }
    backward(loss, tape);
  }

  GradcheckResult res;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    const std::vector<double> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
    const std::int64_t n = p.tensor.numel();
    std::vector<std::int64_t> coords;
    if (n <= opt.coords_per_tensor) {
      coords.resize(static_cast<std::size_t>(n));
      std::iota(coords.begin(), coords.end(), 0);
    } else {
      std::mt19937_64 pick(opt.seed * 1000003ULL + pi);
      std::uniform_int_distribution<std::int64_t> d(0, n - 1);
      for (int k = 0; k < opt.coords_per_tensor; ++k) coords.push_back(d(pick));
    }
    GradcheckRow row{p.name, static_cast<std::int64_t>(coords.size()), 0.0};
    for (const std::int64_t c : coords) {
      auto data = p.tensor.mutable_data();
      const double orig = data[static_cast<std::size_t>(c)];
      data[static_cast<std::size_t>(c)] = orig + opt.step;
      const double lp = eval_loss();
      data[static_cast<std::size_t>(c)] = orig - opt.step;
      const double lm = eval_loss();
      data[static_cast<std::size_t>(c)] = orig;
      const double num = (lp - lm) / (2.0 * opt.step);
      const double a = analytic[static_cast<std::size_t>(c)];
      const double rel = std::abs(a - num) / std::max({1e-3, std::abs(a), std::abs(num)});
      row.max_rel_error = std::max(row.max_rel_error, rel);
    }
    res.max_rel_error = std::max(res.max_rel_error, row.max_rel_error);
    res.rows.push_back(row);
  }
  model.zero_grad();
  res.passed = res.max_rel_error < opt.threshold;
  return res;
}

#define FUDSA_INSTANTIATE(T)                                                                      \
  template struct AdamState<T>;                                                                   \
  template void adam_step<T>(const ParamList<T>&, AdamState<T>&, const TrainConfig&);             \
  template Batch<T> make_batch<T>(const std::vector<SamplePair>&, const std::vector<std::size_t>&); \
  template EvalResult evaluate<T>(const FudsaNet<T>&, const std::vector<SamplePair>&,             \
                                  const LossConfig&, int, double);                                \
  template void restore_snapshot<T>(FudsaNet<T>&, const ModelSnapshot<T>&);                       \
  template TrainReport<T> train<T>(FudsaNet<T>&, const std::vector<SamplePair>&,                  \
                                   const std::vector<SamplePair>&, const TrainConfig&,            \
                                   const EpochCallback&, const AdamState<T>*);                                         \
  template std::string report_csv<T>(const TrainReport<T>&);                                      \
  template void save_checkpoint<T>(const std::filesystem::path&, const FudsaNet<T>&,              \
                                   const AdamState<T>&, const RunConfig&);                        \
  template Checkpoint<T> load_checkpoint<T>(const std::filesystem::path&);

FUDSA_INSTANTIATE(float)
FUDSA_INSTANTIATE(double)
#undef FUDSA_INSTANTIATE

}  // namespace fudsa
