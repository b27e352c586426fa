// Copyright 2026 The fudsa Authors
// SPDX-License-Identifier: Apache-2.0

#include "fudsa/fudsa.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <new>
#include <sstream>
#include <string>

#include "common/error.hpp"
#include "config/run_config.hpp"
#include "data/data_pipeline.hpp"
#include "tensor/ften.hpp"
#include "tensor/tape.hpp"
#include "train/training.hpp"

namespace fs = std::filesystem;
using namespace fudsa;

struct fudsa_config {
  RunConfig cfg;
};

struct fudsa_model {
  RunConfig cfg;
  FudsaNet<float> net;
  AdamState<float> adam;
};

struct fudsa_train_report {
  RunConfig cfg;
  TrainReport<float> report;
};

struct fudsa_gradcheck_report {
  GradcheckResult result;
};

namespace {

thread_local std::string g_last_error;

fudsa_status to_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidShape: return FUDSA_ERR_INVALID_SHAPE;
    case ErrorCode::ShapeMismatch: return FUDSA_ERR_SHAPE_MISMATCH;
    case ErrorCode::InvalidArgument: return FUDSA_ERR_INVALID_ARGUMENT;
    case ErrorCode::InvalidLabel: return FUDSA_ERR_INVALID_LABEL;
    case ErrorCode::InvalidState: return FUDSA_ERR_INVALID_STATE;
    case ErrorCode::CorruptCheckpoint: return FUDSA_ERR_CORRUPT_CHECKPOINT;
    case ErrorCode::NumericalDivergence: return FUDSA_ERR_NUMERICAL_DIVERGENCE;
    case ErrorCode::Io: return FUDSA_ERR_IO;
  }
  return FUDSA_ERR_INTERNAL;
}

template <typename F>
fudsa_status guard(F&& fn) {
  g_last_error.clear();
  try {
    fn();
    return FUDSA_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown failure";
  }
  return FUDSA_ERR_INTERNAL;
}

void need(const void* p, const char* what) {
  if (p == nullptr) fail(ErrorCode::InvalidArgument, std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<SamplePair> load_split(const fs::path& root, const std::string& split) {
  const Manifest m = read_manifest(root / "manifest.txt");
  if (split == "all") return load_pairs(root, m.ids);
  if (split != "train" && split != "val") {
    fail(ErrorCode::InvalidArgument, "split must be train, val or all (got '" + split + "')");
  }
  if (!m.split) {
    fail(ErrorCode::InvalidArgument, (root / "manifest.txt").string() +
                                         ": manifest has no train/val split (run preprocess first)");
  }
  return load_pairs(root, split == "train" ? m.split->train_ids : m.split->val_ids);
}

void check_compatible(const fudsa_model& model, const std::vector<SamplePair>& set) {
  for (const auto& sp : set) {
    const Shape& s = sp.image.shape();
    model.cfg.network.check_input_extents(s.h, s.w);
    if (s.h != model.cfg.size || s.w != model.cfg.size) {
      fail(ErrorCode::ShapeMismatch, "sample '" + sp.id + "' is " + std::to_string(s.h) + "x" +
                                         std::to_string(s.w) + ", model was configured for size " +
                                         std::to_string(model.cfg.size));
    }
    if (s.c != model.cfg.network.input_channels) {
      fail(ErrorCode::ShapeMismatch, "sample '" + sp.id + "' has " + std::to_string(s.c) +
                                         " channels, model expects " +
                                         std::to_string(model.cfg.network.input_channels));
    }
  }
}

}  // namespace

extern "C" {

const char* fudsa_version(void) { return "1.0.0"; }

const char* fudsa_status_name(fudsa_status status) {
  switch (status) {
    case FUDSA_OK: return "ok";
    case FUDSA_ERR_INVALID_SHAPE: return "invalid shape";
    case FUDSA_ERR_SHAPE_MISMATCH: return "shape mismatch";
    case FUDSA_ERR_INVALID_ARGUMENT: return "invalid argument";
    case FUDSA_ERR_INVALID_LABEL: return "invalid label";
    case FUDSA_ERR_INVALID_STATE: return "invalid state";
    case FUDSA_ERR_CORRUPT_CHECKPOINT: return "corrupt checkpoint";
    case FUDSA_ERR_NUMERICAL_DIVERGENCE: return "numerical divergence";
    case FUDSA_ERR_IO: return "i/o error";
    case FUDSA_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* fudsa_last_error(void) { return g_last_error.c_str(); }

void fudsa_string_free(char* s) { std::free(s); }

// ---- config ------------------------------------------------------------------

fudsa_status fudsa_config_new(fudsa_config** out) {
  return guard([&] {
    need(out, "out");
    *out = new fudsa_config{};
  });
}

fudsa_status fudsa_config_parse(const char* text, fudsa_config** out) {
  return guard([&] {
    need(text, "text");
    need(out, "out");
    *out = new fudsa_config{RunConfig::parse(text)};
  });
}

fudsa_status fudsa_config_load(const char* path, fudsa_config** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new fudsa_config{RunConfig::load(path)};
  });
}

fudsa_status fudsa_config_set(fudsa_config* config, const char* key, const char* value) {
  return guard([&] {
    need(config, "config");
    need(key, "key");
    need(value, "value");
    config->cfg.set(key, value);
  });
}

fudsa_status fudsa_config_validate(const fudsa_config* config) {
  return guard([&] {
    need(config, "config");
    config->cfg.validate();
  });
}

fudsa_status fudsa_config_to_text(const fudsa_config* config, char** out) {
  return guard([&] {
    need(config, "config");
    need(out, "out");
    *out = dup_string(config->cfg.to_text());
  });
}

void fudsa_config_free(fudsa_config* config) { delete config; }

// ---- datasets ----------------------------------------------------------------

fudsa_status fudsa_synth_dataset(const char* out_dir, int64_t count, int64_t size, int levels,
                                 uint64_t seed) {
  return guard([&] {
    need(out_dir, "out_dir");
    if (count < 1) fail(ErrorCode::InvalidArgument, "count must be >= 1");
    if (levels < 2 || levels > 8) fail(ErrorCode::InvalidArgument, "levels must lie in [2, 8]");
    const std::int64_t unit = std::int64_t{1} << levels;
    if (size < 16 || size % unit != 0) {
      fail(ErrorCode::InvalidArgument, "size " + std::to_string(size) + " must be >= 16 and divisible by " +
                                           std::to_string(unit) + " (2^levels)");
    }
    PhantomOptions opt;
    opt.size = size;
    std::vector<Phantom> phantoms;
    phantoms.reserve(static_cast<std::size_t>(count));
    for (std::int64_t k = 0; k < count; ++k) {
      phantoms.push_back(synth_phantom(seed + FUDSA_SEED_OFFSET_SYNTH + static_cast<std::uint64_t>(k), opt));
    }
    std::error_code ec;
    fs::create_directories(fs::path(out_dir) / "images", ec);
    fs::create_directories(fs::path(out_dir) / "masks", ec);
    if (ec) fail(ErrorCode::Io, std::string(out_dir) + ": cannot create directory (" + ec.message() + ")");
    write_raw_dataset(out_dir, phantoms);
  });
}

fudsa_status fudsa_preprocess(const char* in_dir, const char* out_dir, double lo_hu, double hi_hu,
                              int64_t size, int levels, uint64_t seed,
                              fudsa_preprocess_summary* summary) {
  return guard([&] {
    need(in_dir, "in_dir");
    need(out_dir, "out_dir");
    PreprocessOptions opt;
    opt.lo_hu = lo_hu;
    opt.hi_hu = hi_hu;
    opt.size = size;
    opt.levels = levels;
    opt.seed = seed + FUDSA_SEED_OFFSET_SPLIT;
    const PreprocessSummary s = preprocess_dataset(in_dir, out_dir, opt);
    if (summary != nullptr) {
      summary->input_count = static_cast<int64_t>(s.input_count);
      summary->kept_count = static_cast<int64_t>(s.kept_count);
      summary->train_count = static_cast<int64_t>(s.split.train_ids.size());
      summary->val_count = static_cast<int64_t>(s.split.val_ids.size());
    }
  });
}

// ---- models ------------------------------------------------------------------

fudsa_status fudsa_model_new(const fudsa_config* config, fudsa_model** out) {
  return guard([&] {
    need(config, "config");
    need(out, "out");
    config->cfg.validate();
    auto net = FudsaNet<float>::build(config->cfg.network, config->cfg.train.seed + FUDSA_SEED_OFFSET_INIT);
    auto adam = AdamState<float>::for_params(net.parameters());
    *out = new fudsa_model{config->cfg, std::move(net), std::move(adam)};
  });
}

fudsa_status fudsa_model_load(const char* path, fudsa_model** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    auto ck = load_checkpoint<float>(path);
    *out = new fudsa_model{std::move(ck.config), std::move(ck.model), std::move(ck.adam)};
  });
}

fudsa_status fudsa_model_save(const fudsa_model* model, const char* path) {
  return guard([&] {
    need(model, "model");
    need(path, "path");
    save_checkpoint(path, model->net, model->adam, model->cfg);
  });
}

fudsa_status fudsa_model_config(const fudsa_model* model, fudsa_config** out) {
  return guard([&] {
    need(model, "model");
    need(out, "out");
    *out = new fudsa_config{model->cfg};
  });
}

int64_t fudsa_model_parameter_count(const fudsa_model* model) {
  return model == nullptr ? 0 : model->net.parameter_count();
}

int64_t fudsa_model_adam_steps(const fudsa_model* model) { return model == nullptr ? 0 : model->adam.t; }

fudsa_status fudsa_model_summary(const fudsa_model* model, char** out) {
  return guard([&] {
    need(model, "model");
    need(out, "out");
    std::ostringstream o;
    for (const auto& row : model->net.parameter_summary()) {
      o << row.name << " " << row.shape.str() << " " << row.count << "\n";
    }
    o << "total " << model->net.parameter_count() << "\n";
    *out = dup_string(o.str());
  });
}

void fudsa_model_free(fudsa_model* model) { delete model; }

// ---- training ----------------------------------------------------------------

fudsa_status fudsa_train(fudsa_model* model, const char* data_dir, fudsa_epoch_callback callback,
                         void* user, fudsa_train_report** out) {
  return guard([&] {
    need(model, "model");
    need(data_dir, "data_dir");
    need(out, "out");
    const auto tr = load_split(data_dir, "train");
    const auto va = load_split(data_dir, "val");
    check_compatible(*model, tr);
    check_compatible(*model, va);
    TrainConfig tc = model->cfg.train;
    tc.seed = model->cfg.train.seed + FUDSA_SEED_OFFSET_SHUFFLE;
    EpochCallback cb;
    if (callback != nullptr) {
      cb = [callback, user](const EpochRecord& e) {
        const fudsa_epoch ep{e.epoch, e.train_loss, e.val_loss, e.val.dsc, e.val.iou, e.val.recall};
        callback(&ep, user);
      };
    }
    auto rep = std::make_unique<fudsa_train_report>();
    rep->cfg = model->cfg;
    rep->report = train(model->net, tr, va, tc, cb, model->adam.t > 0 ? &model->adam : nullptr);
    model->adam = rep->report.best.adam.clone();
    *out = rep.release();
  });
}

int fudsa_train_report_best_epoch(const fudsa_train_report* report) {
  return report == nullptr ? 0 : report->report.best_epoch;
}

int fudsa_train_report_epochs(const fudsa_train_report* report) {
  return report == nullptr ? 0 : static_cast<int>(report->report.epochs.size());
}

fudsa_status fudsa_train_report_csv(const fudsa_train_report* report, char** out) {
  return guard([&] {
    need(report, "report");
    need(out, "out");
    *out = dup_string(report_csv(report->report));
  });
}

fudsa_status fudsa_train_report_final_model(const fudsa_train_report* report, fudsa_model** out) {
  return guard([&] {
    need(report, "report");
    need(out, "out");
    auto net = FudsaNet<float>::build(report->cfg.network, 0);
    restore_snapshot(net, report->report.last);
    *out = new fudsa_model{report->cfg, std::move(net), report->report.last.adam.clone()};
  });
}

void fudsa_train_report_free(fudsa_train_report* report) { delete report; }

// ---- evaluation and prediction -------------------------------------------------

fudsa_status fudsa_evaluate(const fudsa_model* model, const char* data_dir, const char* split,
                            fudsa_metrics* out) {
  return guard([&] {
    need(model, "model");
    need(data_dir, "data_dir");
    need(split, "split");
    need(out, "out");
    const auto set = load_split(data_dir, split);
    if (set.empty()) fail(ErrorCode::InvalidArgument, std::string("split '") + split + "' is empty");
    check_compatible(*model, set);
    const EvalResult r = evaluate(model->net, set, model->cfg.train.loss, model->cfg.train.batch_size);
    *out = fudsa_metrics{r.n_images, r.metrics.tp, r.metrics.fp, r.metrics.fn, r.metrics.tn,
                         r.metrics.dsc, r.metrics.iou, r.metrics.recall, r.mean_loss};
  });
}

const char* fudsa_metrics_csv_header(void) {
  static const std::string header = metrics_csv_header();
  return header.c_str();
}

fudsa_status fudsa_metrics_csv_row(const char* split, const fudsa_metrics* m, char** out) {
  return guard([&] {
    need(split, "split");
    need(m, "metrics");
    need(out, "out");
    MetricsRecord r = MetricsRecord::from_counts(m->tp, m->fp, m->fn, m->tn);
    *out = dup_string(metrics_csv_row(split, m->n_images, r));
  });
}

fudsa_status fudsa_predict_file(const fudsa_model* model, const char* image_path, const char* mask_path,
                                const char* attention_dir, int* files_written) {
  return guard([&] {
    need(model, "model");
    need(image_path, "image_path");
    need(mask_path, "mask_path");
    const fs::path in(image_path);
    Tensor<float> image;
    if (in.extension() == ".ften") {
      image = load_ften<float>(in);
    } else {
      image = window_and_normalize(read_pgm16(in), model->cfg.lo_hu, model->cfg.hi_hu);
    }
    const Shape s = image.shape();
    if (s.n != 1 || s.c != model->cfg.network.input_channels) {
      fail(ErrorCode::ShapeMismatch, in.string() + ": image shape " + s.str() + " is not (1," +
                                         std::to_string(model->cfg.network.input_channels) + ",H,W)");
    }
    model->cfg.network.check_input_extents(s.h, s.w);

    NoTapeScope<float> no_tape;
    const auto outputs = model->net.forward(image);
    const Tensor<float> mask = threshold_mask(outputs.final_map);
    std::vector<std::uint8_t> bytes(mask.data().begin(), mask.data().end());
    write_mask_pgm(mask_path, s.h, s.w, bytes);

    int written = 0;
    if (attention_dir != nullptr) {
      const fs::path dir(attention_dir);
      std::error_code ec;
      fs::create_directories(dir, ec);
      if (ec) fail(ErrorCode::Io, dir.string() + ": cannot create directory (" + ec.message() + ")");
      for (std::size_t i = 0; i < outputs.attention.size(); ++i) {
        if (!outputs.attention[i]) continue;
        const auto& tr = *outputs.attention[i];
        const std::string level = std::to_string(i + 1);
        if (tr.channel_weights.defined()) {
          save_ften(dir / ("att_l" + level + "_wcha.ften"), tr.channel_weights);
          ++written;
        }
        if (tr.spatial_map.defined()) {
          save_ften(dir / ("att_l" + level + "_q.ften"), tr.spatial_map);
          ++written;
        }
      }
    }
    if (files_written != nullptr) *files_written = written;
  });
}

// ---- gradient check ------------------------------------------------------------

void fudsa_gradcheck_defaults(fudsa_gradcheck_options* o) {
  if (o == nullptr) return;
  const GradcheckOptions d;
  *o = fudsa_gradcheck_options{d.levels, d.channels, d.size, d.coords_per_tensor,
                               d.step, d.threshold, d.seed, 0};
}

fudsa_status fudsa_gradcheck(const fudsa_gradcheck_options* options, fudsa_gradcheck_report** out) {
  return guard([&] {
    need(options, "options");
    need(out, "out");
    GradcheckOptions g;
    g.levels = options->levels;
    g.channels = options->channels;
    g.size = options->size;
    g.coords_per_tensor = options->coords_per_tensor;
    g.step = options->step;
    g.threshold = options->threshold;
    g.seed = options->seed;
    struct FaultScope {
      explicit FaultScope(bool on) { testing::set_backward_fault(on); }
      ~FaultScope() { testing::set_backward_fault(false); }
    } fault(options->inject_fault != 0);
    *out = new fudsa_gradcheck_report{run_gradcheck(g)};
  });
}

size_t fudsa_gradcheck_count(const fudsa_gradcheck_report* r) { return r == nullptr ? 0 : r->result.rows.size(); }

const char* fudsa_gradcheck_name(const fudsa_gradcheck_report* r, size_t i) {
  if (r == nullptr || i >= r->result.rows.size()) return "";
  return r->result.rows[i].name.c_str();
}

double fudsa_gradcheck_error(const fudsa_gradcheck_report* r, size_t i) {
  if (r == nullptr || i >= r->result.rows.size()) return 0.0;
  return r->result.rows[i].max_rel_error;
}

int64_t fudsa_gradcheck_coords(const fudsa_gradcheck_report* r, size_t i) {
  if (r == nullptr || i >= r->result.rows.size()) return 0;
  return r->result.rows[i].coords;
}

double fudsa_gradcheck_max_error(const fudsa_gradcheck_report* r) { return r == nullptr ? 0.0 : r->result.max_rel_error; }

int fudsa_gradcheck_passed(const fudsa_gradcheck_report* r) { return r != nullptr && r->result.passed ? 1 : 0; }

void fudsa_gradcheck_free(fudsa_gradcheck_report* r) { delete r; }

}  // extern "C"
