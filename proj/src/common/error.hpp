// Copyright 2026 The fudsa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace fudsa {

enum class ErrorCode {
  InvalidShape,
  ShapeMismatch,
  InvalidArgument,
  InvalidLabel,
  InvalidState,
  CorruptCheckpoint,
  NumericalDivergence,
  Io,
};

const char* error_code_name(ErrorCode code) noexcept;

/// Every failure raised by the library. The code is what crosses the C boundary.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace fudsa
