// Copyright 2026 The fudsa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "config/run_config.hpp"
#include "data/data_pipeline.hpp"
#include "loss/losses_metrics.hpp"
#include "net/fudsa_net.hpp"

namespace fudsa {

template <typename T>
struct AdamState {
  std::vector<std::string> names;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::int64_t t = 0;

  /// Zeroed moments shaped like `params`.
  static AdamState for_params(const ParamList<T>& params);
  AdamState clone() const;
};

/// One Adam update from the accumulated gradients. Gradients are left for the
/// caller to zero. Name or shape drift against the state raises InvalidState.
template <typename T>
void adam_step(const ParamList<T>& params, AdamState<T>& state, const TrainConfig& cfg);

/// Images and masks stacked along N. Images are cast to T.
template <typename T>
struct Batch {
  Tensor<T> images;
  Tensor<T> masks;
};

template <typename T>
Batch<T> make_batch(const std::vector<SamplePair>& set, const std::vector<std::size_t>& indices);

struct EvalResult {
  MetricsRecord metrics;  // counts pooled over the whole set
  double mean_loss = 0.0;  // batch losses weighted by batch size
  std::int64_t n_images = 0;
};

/// Pure: no parameter or gradient mutation.
template <typename T>
EvalResult evaluate(const FudsaNet<T>& model, const std::vector<SamplePair>& set,
                    const LossConfig& loss, int batch_size = 4, double threshold = kMaskThreshold);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  MetricsRecord val;
};

template <typename T>
struct ModelSnapshot {
  std::vector<Tensor<T>> params;
  AdamState<T> adam;
};

template <typename T>
struct TrainReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  bool stopped_early = false;
  ModelSnapshot<T> best;
  ModelSnapshot<T> last;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Adam with early stopping on validation loss. On return the model holds the
/// best-validation parameters. `resume` continues an existing optimizer state.
template <typename T>
TrainReport<T> train(FudsaNet<T>& model, const std::vector<SamplePair>& train_set,
                     const std::vector<SamplePair>& val_set, const TrainConfig& cfg,
                     const EpochCallback& on_epoch = {}, const AdamState<T>* resume = nullptr);

template <typename T>
void restore_snapshot(FudsaNet<T>& model, const ModelSnapshot<T>& snapshot);

std::string report_csv_header();
std::string report_csv_row(const EpochRecord& e);
template <typename T>
std::string report_csv(const TrainReport<T>& report);

// Checkpoint: "FUD1" | u32 n | n x (u16 len, name, FTEN) | u32 len, config text.
// Entries: param/<name>, adam/m/<name>, adam/v/<name>, adam/t.
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const FudsaNet<T>& model,
                     const AdamState<T>& adam, const RunConfig& config);

template <typename T>
struct Checkpoint {
  RunConfig config;
  FudsaNet<T> model;
  AdamState<T> adam;
};

/// Bad magic, truncation or a name/shape mismatch raise CorruptCheckpoint.
template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path);

struct GradcheckOptions {
  int levels = 3;
  int channels = 4;
  std::int64_t size = 32;
  std::int64_t batch = 2;
  int coords_per_tensor = 20;
  double step = 1e-6;
  double threshold = 1e-5;
  std::uint64_t seed = 0;
};

struct GradcheckRow {
  std::string name;
  std::int64_t coords = 0;
  double max_rel_error = 0.0;
};

struct GradcheckResult {
  std::vector<GradcheckRow> rows;  // one per parameter tensor, in order
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Central differences in f64 against the analytic gradient of the full
/// supervised loss, for a random model, batch and mask. Relative error is
/// |a - n| / max(1e-3, |a|, |n|).
GradcheckResult run_gradcheck(const GradcheckOptions& options);

}  // namespace fudsa
