// Copyright 2026 The fudsa Authors
// SPDX-License-Identifier: Apache-2.0

#include "common/error.hpp"

namespace fudsa {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidShape: return "InvalidShape";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidLabel: return "InvalidLabel";
    case ErrorCode::InvalidState: return "InvalidState";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::NumericalDivergence: return "NumericalDivergence";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace fudsa
