// Copyright 2026 The fudsa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "loss/losses_metrics.hpp"
#include "net/fudsa_net.hpp"

namespace fudsa {

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch_size = 4;
  int max_epochs = 300;
  int patience = 10;
  double min_delta = 1e-5;
  std::uint64_t seed = 0;
  LossConfig loss;

  void validate() const;
};

/// Everything a run needs, as one flat key=value document.
struct RunConfig {
  NetworkConfig network;
  TrainConfig train;
  std::string data_dir;
  double lo_hu = -1000.0;
  double hi_hu = 170.0;
  std::int64_t size = 64;

  /// Applies one key. Unknown keys and malformed values raise InvalidArgument.
  void set(const std::string& key, const std::string& value);
  /// "full", "I", "II", "III" or "custom", from the structural flags.
  std::string variant_name() const;
  /// Every key with its resolved value, one per line, fixed order.
  std::string to_text() const;
  void validate() const;

  static const std::vector<std::string>& keys();
  /// `#` starts a comment; blank lines ignored; duplicate keys rejected.
  /// `variant` is applied before the individual structural flags.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::string& path);
};

}  // namespace fudsa
