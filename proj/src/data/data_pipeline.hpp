// Copyright 2026 The fudsa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tensor/tensor.hpp"

namespace fudsa {

inline constexpr double kDefaultLoHu = -1000.0;
inline constexpr double kDefaultHiHu = 170.0;
inline constexpr int kHuOffset = 32768;

struct RawSlice {
  std::string id;
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<std::int16_t> pixels;  // HU, row-major
};

struct SamplePair {
  std::string id;
  Tensor<float> image;  // (1,1,H,W) in [0,1]
  Tensor<float> mask;   // (1,1,H,W) in {0,1}

  /// Throws InvalidShape / InvalidLabel / InvalidArgument on violations.
  void validate() const;
};

struct SplitManifest {
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
  std::uint64_t seed = 0;
};

/// Clip to [lo, hi] and map linearly onto [0, 1].
Tensor<float> window_and_normalize(const RawSlice& raw, double lo_hu = kDefaultLoHu,
                                   double hi_hu = kDefaultHiHu);

/// Square resize: bilinear image, nearest mask re-binarized. `target` must be
/// >= 8 and divisible by 2^levels.
SamplePair resize_pair(const SamplePair& pair, std::int64_t target, int levels = 4);

/// Keeps pairs whose mask has at least one positive pixel, in order.
std::vector<SamplePair> filter_lesion_slices(const std::vector<SamplePair>& pairs);

/// Seeded shuffle, then the first ceil(0.8 n) ids go to training.
SplitManifest split_dataset(const std::vector<std::string>& ids, std::uint64_t seed);

struct Ellipse {
  double cy = 0.0;
  double cx = 0.0;
  double a = 0.0;  // semi-axis along the rotated x direction, pixels
  double b = 0.0;
  double theta = 0.0;

  bool contains(double y, double x) const;
};

struct PhantomOptions {
  std::int64_t size = 64;
  int min_lesions = 1;
  int max_lesions = 3;
  double min_contrast_hu = 300.0;  // lesion offset over lung parenchyma
  double max_contrast_hu = 700.0;
  double noise_sd_hu = 25.0;
  double blur_sigma = 1.0;  // pixels, lesion intensity layer only

  void validate() const;
};

struct Phantom {
  RawSlice raw;
  std::vector<std::uint8_t> mask;  // 0/1, pre-blur lesion support
  std::vector<Ellipse> lesions;
};

/// Lung-window CT-like slice: air background, soft-tissue body ellipse, two
/// dark lung fields, 1..k blurred elliptical lesions, Gaussian noise.
Phantom synth_phantom(std::uint64_t seed, const PhantomOptions& options = {});

/// Windowed with the default HU window.
SamplePair phantom_pair(const Phantom& phantom);

// File formats. Malformed input raises ErrorCode::Io naming the file.
void write_pgm16(const std::filesystem::path& path, const RawSlice& slice);
RawSlice read_pgm16(const std::filesystem::path& path);
void write_mask_pgm(const std::filesystem::path& path, std::int64_t height, std::int64_t width,
                    const std::vector<std::uint8_t>& mask);
/// Any nonzero sample reads as 1.
std::vector<std::uint8_t> read_mask_pgm(const std::filesystem::path& path, std::int64_t& height,
                                        std::int64_t& width);
Tensor<float> read_mask_tensor(const std::filesystem::path& path);
void write_mask_tensor(const std::filesystem::path& path, const Tensor<float>& mask);

struct Manifest {
  std::vector<std::string> ids;
  std::optional<SplitManifest> split;
};

void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

/// Writes images/<id>.pgm, masks/<id>.pgm and manifest.txt.
void write_raw_dataset(const std::filesystem::path& root, const std::vector<Phantom>& phantoms);

struct PreprocessOptions {
  double lo_hu = kDefaultLoHu;
  double hi_hu = kDefaultHiHu;
  std::int64_t size = 64;
  int levels = 4;
  std::uint64_t seed = 0;
};

struct PreprocessSummary {
  std::size_t input_count = 0;
  std::size_t kept_count = 0;
  SplitManifest split;
};

/// window -> normalize -> resize -> lesion filter -> split. Output layout:
/// images/<id>.ften, masks/<id>.pgm, manifest.txt, preprocess.cfg.
PreprocessSummary preprocess_dataset(const std::filesystem::path& in_root,
                                     const std::filesystem::path& out_root,
                                     const PreprocessOptions& options);

/// Image from images/<id>.ften (normalized) or images/<id>.pgm (raw HU,
/// default window), mask from masks/<id>.pgm.
SamplePair load_pair(const std::filesystem::path& root, const std::string& id);
std::vector<SamplePair> load_pairs(const std::filesystem::path& root,
                                   const std::vector<std::string>& ids);

}  // namespace fudsa
