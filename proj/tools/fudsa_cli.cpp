// Copyright 2026 The fudsa Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end. Talks to the library through the C interface only.
// Exit codes: 0 success, 1 check failure, 2 usage/validation, 3 divergence.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fudsa/fudsa.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDiverged = 3;

struct CliFailure {
  int code;
};

int exit_code_for(fudsa_status s) {
  if (s == FUDSA_OK) return kExitOk;
  if (s == FUDSA_ERR_NUMERICAL_DIVERGENCE) return kExitDiverged;
  return kExitUsage;
}

// Throws CliFailure after printing the library's message.
void check(fudsa_status s, const std::string& context) {
  if (s == FUDSA_OK) return;
  std::fprintf(stderr, "error: %s: %s (%s)\n", context.c_str(), fudsa_last_error(), fudsa_status_name(s));
  throw CliFailure{exit_code_for(s)};
}

[[noreturn]] void usage_error(const std::string& msg) {
  std::fprintf(stderr, "error: %s\n", msg.c_str());
  throw CliFailure{kExitUsage};
}

struct ConfigDeleter {
  void operator()(fudsa_config* c) const { fudsa_config_free(c); }
};
struct ModelDeleter {
  void operator()(fudsa_model* m) const { fudsa_model_free(m); }
};
struct ReportDeleter {
  void operator()(fudsa_train_report* r) const { fudsa_train_report_free(r); }
};
struct GradcheckDeleter {
  void operator()(fudsa_gradcheck_report* r) const { fudsa_gradcheck_free(r); }
};
using ConfigPtr = std::unique_ptr<fudsa_config, ConfigDeleter>;
using ModelPtr = std::unique_ptr<fudsa_model, ModelDeleter>;
using ReportPtr = std::unique_ptr<fudsa_train_report, ReportDeleter>;
using GradcheckPtr = std::unique_ptr<fudsa_gradcheck_report, GradcheckDeleter>;

std::string take_string(char* s) {
  std::string out = s == nullptr ? "" : s;
  fudsa_string_free(s);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) usage_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) usage_error("write failed: " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) usage_error("cannot create directory " + dir.string() + ": " + ec.message());
}

// ---- subcommands ---------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::int64_t count = 10;
  std::int64_t size = 64;
  int levels = 4;
  std::uint64_t seed = 0;
};

int run_synth(const SynthArgs& a) {
  check(fudsa_synth_dataset(a.out.c_str(), a.count, a.size, a.levels, a.seed), "synth");
  std::printf("wrote %lld phantoms (%lldx%lld) to %s\n", static_cast<long long>(a.count),
              static_cast<long long>(a.size), static_cast<long long>(a.size), a.out.c_str());
  return kExitOk;
}

struct PreprocessArgs {
  std::string in;
  std::string out;
  double lo_hu = -1000.0;
  double hi_hu = 170.0;
  std::int64_t size = 64;
  int levels = 4;
  std::uint64_t seed = 0;
};

int run_preprocess(const PreprocessArgs& a) {
  fudsa_preprocess_summary s{};
  check(fudsa_preprocess(a.in.c_str(), a.out.c_str(), a.lo_hu, a.hi_hu, a.size, a.levels, a.seed, &s),
        "preprocess");
  std::printf("input %lld slices, kept %lld with lesions, split %lld train / %lld val -> %s\n",
              static_cast<long long>(s.input_count), static_cast<long long>(s.kept_count),
              static_cast<long long>(s.train_count), static_cast<long long>(s.val_count), a.out.c_str());
  return kExitOk;
}

struct TrainArgs {
  std::string data;
  std::string config;
  std::string out;
  std::string variant;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int epochs = 0;
  bool quiet = false;
};

void print_epoch(const fudsa_epoch* e, void* user) {
  if (*static_cast<bool*>(user)) return;
  std::printf("epoch %d train_loss=%.6f val_loss=%.6f val_dsc=%.4f val_iou=%.4f val_recall=%.4f\n", e->epoch,
              e->train_loss, e->val_loss, e->val_dsc, e->val_iou, e->val_recall);
  std::fflush(stdout);
}

int run_train(const TrainArgs& a) {
  if (!fs::exists(fs::path(a.data) / "manifest.txt")) {
    usage_error("no manifest.txt under " + a.data + " (run preprocess first)");
  }
  fudsa_config* raw = nullptr;
  if (a.config.empty()) {
    check(fudsa_config_new(&raw), "config");
  } else {
    check(fudsa_config_load(a.config.c_str(), &raw), "config " + a.config);
  }
  ConfigPtr cfg(raw);
  // Flags override file values, in this order.
  check(fudsa_config_set(cfg.get(), "data_dir", a.data.c_str()), "--data");
  if (!a.variant.empty()) check(fudsa_config_set(cfg.get(), "variant", a.variant.c_str()), "--variant");
  if (a.seed_given) check(fudsa_config_set(cfg.get(), "seed", std::to_string(a.seed).c_str()), "--seed");
  if (a.epochs > 0) check(fudsa_config_set(cfg.get(), "max_epochs", std::to_string(a.epochs).c_str()), "--epochs");
  for (const auto& kv : a.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) usage_error("--set expects key=value, got '" + kv + "'");
    check(fudsa_config_set(cfg.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()), "--set " + kv);
  }
  check(fudsa_config_validate(cfg.get()), "config");

  const fs::path out(a.out);
  ensure_dir(out);
  char* text = nullptr;
  check(fudsa_config_to_text(cfg.get(), &text), "config");
  write_text(out / "config.txt", take_string(text));

  fudsa_model* m = nullptr;
  check(fudsa_model_new(cfg.get(), &m), "model");
  ModelPtr model(m);
  fudsa_train_report* r = nullptr;
  bool quiet = a.quiet;
  check(fudsa_train(model.get(), a.data.c_str(), print_epoch, &quiet, &r), "train");
  ReportPtr report(r);

  check(fudsa_model_save(model.get(), (out / "best.fud").string().c_str()), "save best checkpoint");
  fudsa_model* f = nullptr;
  check(fudsa_train_report_final_model(report.get(), &f), "final model");
  ModelPtr final_model(f);
  check(fudsa_model_save(final_model.get(), (out / "final.fud").string().c_str()), "save final checkpoint");
  char* csv = nullptr;
  check(fudsa_train_report_csv(report.get(), &csv), "report");
  write_text(out / "report.csv", take_string(csv));
  std::printf("best epoch %d of %d; wrote %s/{best.fud,final.fud,report.csv,config.txt}\n",
              fudsa_train_report_best_epoch(report.get()), fudsa_train_report_epochs(report.get()),
              a.out.c_str());
  return kExitOk;
}

struct EvalArgs {
  std::string data;
  std::string checkpoint;
  std::string split = "val";
};

int run_eval(const EvalArgs& a) {
  fudsa_model* m = nullptr;
  check(fudsa_model_load(a.checkpoint.c_str(), &m), "checkpoint " + a.checkpoint);
  ModelPtr model(m);
  fudsa_metrics metrics{};
  check(fudsa_evaluate(model.get(), a.data.c_str(), a.split.c_str(), &metrics), "eval");
  char* row = nullptr;
  check(fudsa_metrics_csv_row(a.split.c_str(), &metrics, &row), "eval");
  std::printf("%s\n%s\n", fudsa_metrics_csv_header(), take_string(row).c_str());
  return kExitOk;
}

struct PredictArgs {
  std::string checkpoint;
  std::string image;
  std::string out;
  std::string dump_attention;
};

int run_predict(const PredictArgs& a) {
  fudsa_model* m = nullptr;
  check(fudsa_model_load(a.checkpoint.c_str(), &m), "checkpoint " + a.checkpoint);
  ModelPtr model(m);
  int dumped = 0;
  check(fudsa_predict_file(model.get(), a.image.c_str(), a.out.c_str(),
                           a.dump_attention.empty() ? nullptr : a.dump_attention.c_str(), &dumped),
        "predict " + a.image);
  std::printf("wrote %s", a.out.c_str());
  if (!a.dump_attention.empty()) std::printf(" and %d attention maps to %s", dumped, a.dump_attention.c_str());
  std::printf("\n");
  return kExitOk;
}

struct GradcheckArgs {
  int levels = 0;
  int channels = 0;
  std::int64_t size = 0;
  std::string precision = "f64";
  int coords = 0;
  double step = 0.0;
  double threshold = 0.0;
  std::uint64_t seed = 0;
  bool inject_fault = false;

  GradcheckArgs() {
    fudsa_gradcheck_options d;
    fudsa_gradcheck_defaults(&d);
    levels = d.levels;
    channels = d.channels;
    size = d.size;
    coords = d.coords_per_tensor;
    step = d.step;
    threshold = d.threshold;
    seed = d.seed;
  }
};

int run_gradcheck(const GradcheckArgs& a) {
  if (a.precision != "f64") usage_error("--precision: only f64 is supported for finite differences");
  fudsa_gradcheck_options o;
  fudsa_gradcheck_defaults(&o);
  o.levels = a.levels;
  o.channels = a.channels;
  o.size = a.size;
  o.coords_per_tensor = a.coords;
  o.step = a.step;
  o.threshold = a.threshold;
  o.seed = a.seed;
  o.inject_fault = a.inject_fault ? 1 : 0;
  fudsa_gradcheck_report* r = nullptr;
  check(fudsa_gradcheck(&o, &r), "gradcheck");
  GradcheckPtr report(r);
  const std::size_t n = fudsa_gradcheck_count(report.get());
  std::printf("%-48s %7s %12s\n", "parameter", "coords", "max_rel_err");
  std::vector<std::size_t> offenders;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = fudsa_gradcheck_error(report.get(), i);
    std::printf("%-48s %7lld %12.3e\n", fudsa_gradcheck_name(report.get(), i),
                static_cast<long long>(fudsa_gradcheck_coords(report.get(), i)), e);
    if (!(e < a.threshold)) offenders.push_back(i);
  }
  const bool passed = fudsa_gradcheck_passed(report.get()) != 0;
  std::printf("tensors %zu, max_rel_err %.3e, threshold %.1e: %s\n", n, fudsa_gradcheck_max_error(report.get()),
              a.threshold, passed ? "PASS" : "FAIL");
  if (!passed) {
    std::fprintf(stderr, "gradient check failed for %zu tensor(s):\n", offenders.size());
    for (const std::size_t i : offenders) {
      std::fprintf(stderr, "  %s %.3e\n", fudsa_gradcheck_name(report.get(), i), fudsa_gradcheck_error(report.get(), i));
    }
    return kExitCheckFailed;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fudsa: full-scale deeply supervised attention network for lesion segmentation"};
  app.require_subcommand(1);
  app.footer(
      "Seeds: one --seed per run; subsystems derive theirs by fixed offsets:\n"
      "  model init = seed+1, minibatch shuffle = seed+2 (xor epoch), train/val split = seed+3,\n"
      "  phantom k = seed+1000+k. FUDSA_THREADS caps worker threads (default 1).\n"
      "Exit codes: 0 success, 1 check failure, 2 usage/validation, 3 numerical divergence.");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "write a synthetic phantom dataset (raw HU PGMs, masks, manifest)");
  synth->add_option("--out", sa.out, "output directory")->required();
  synth->add_option("--count", sa.count, "number of phantoms")->capture_default_str();
  synth->add_option("--size", sa.size, "image side in pixels; divisible by 2^levels")->capture_default_str();
  synth->add_option("--levels", sa.levels, "encoder depth the size must suit")->capture_default_str();
  synth->add_option("--seed", sa.seed, "run seed")->capture_default_str();

  PreprocessArgs pa;
  auto* prep = app.add_subcommand("preprocess", "window, normalize, resize, keep lesion slices, split 80/20");
  prep->add_option("--in", pa.in, "raw dataset directory")->required();
  prep->add_option("--out", pa.out, "processed dataset directory")->required();
  prep->add_option("--lo-hu", pa.lo_hu, "lower HU window bound")->capture_default_str();
  prep->add_option("--hi-hu", pa.hi_hu, "upper HU window bound")->capture_default_str();
  prep->add_option("--size", pa.size, "output side in pixels")->capture_default_str();
  prep->add_option("--levels", pa.levels, "encoder depth the size must suit")->capture_default_str();
  prep->add_option("--seed", pa.seed, "run seed (split uses seed+3)")->capture_default_str();

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "train on a preprocessed dataset; writes best/final checkpoints, report, config");
  trn->add_option("--data", ta.data, "preprocessed dataset directory")->required();
  trn->add_option("--config", ta.config, "key=value run config (defaults if omitted)");
  trn->add_option("--out", ta.out, "output directory")->required();
  trn->add_option("--variant", ta.variant, "full | I (spatial attention only) | II (no deep supervision) | III (no decoder residuals)")
      ->check(CLI::IsMember({"full", "I", "II", "III"}));
  auto* seed_opt = trn->add_option("--seed", ta.seed, "run seed (overrides config seed; default 0)");
  trn->add_option("--epochs", ta.epochs, "override max_epochs (default 300)");
  trn->add_option("--set", ta.overrides, "override any config key: --set key=value (repeatable)");
  trn->add_flag("--quiet", ta.quiet, "no per-epoch lines");

  EvalArgs ea;
  auto* evl = app.add_subcommand("eval", "pooled metrics of a checkpoint on a dataset split (CSV to stdout)");
  evl->add_option("--data", ea.data, "preprocessed dataset directory")->required();
  evl->add_option("--checkpoint", ea.checkpoint, "FUD1 checkpoint")->required();
  evl->add_option("--split", ea.split, "train | val | all")->capture_default_str()->check(CLI::IsMember({"train", "val", "all"}));

  PredictArgs pra;
  auto* pred = app.add_subcommand("predict", "binary mask (0/255 PGM) for one image");
  pred->add_option("--checkpoint", pra.checkpoint, "FUD1 checkpoint")->required();
  pred->add_option("--image", pra.image, "image: .ften (normalized) or 16-bit PGM (HU+32768)")->required();
  pred->add_option("--out", pra.out, "output mask PGM")->required();
  pred->add_option("--dump-attention", pra.dump_attention, "directory for att_l<l>_wcha.ften / att_l<l>_q.ften");

  GradcheckArgs ga;
  auto* gck = app.add_subcommand("gradcheck", "finite-difference check of every parameter gradient");
  gck->add_option("--levels", ga.levels, "encoder depth")->capture_default_str();
  gck->add_option("--channels", ga.channels, "base channels C1")->capture_default_str();
  gck->add_option("--size", ga.size, "input side; divisible by 2^levels")->capture_default_str();
  gck->add_option("--precision", ga.precision, "arithmetic precision (f64 only)")->capture_default_str();
  gck->add_option("--coords", ga.coords, "sampled coordinates per tensor")->capture_default_str();
  gck->add_option("--step", ga.step, "central-difference step")->capture_default_str();
  gck->add_option("--threshold", ga.threshold, "max relative error to pass")->capture_default_str();
  gck->add_option("--seed", ga.seed, "model/input seed")->capture_default_str();
  gck->add_flag("--inject-fault", ga.inject_fault, "test hook: corrupt the sigmoid backward rule");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*synth) return run_synth(sa);
    if (*prep) return run_preprocess(pa);
    if (*trn) {
      ta.seed_given = seed_opt->count() > 0;
      return run_train(ta);
    }
    if (*evl) return run_eval(ea);
    if (*pred) return run_predict(pra);
    if (*gck) return run_gradcheck(ga);
  } catch (const CliFailure& f) {
    return f.code;
  }
  return kExitUsage;
}
