// Copyright 2026 The fudsa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

namespace fudsa::detail {

/// Row-major C = alpha * op(A) * op(B) + beta * C, with op(A) of size m x k
/// and op(B) of size k x n.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n,
          std::int64_t k, T alpha, const T* a, std::int64_t lda, const T* b,
          std::int64_t ldb, T beta, T* c, std::int64_t ldc);

/// Worker-thread cap read from FUDSA_THREADS (default 1).
int configured_threads() noexcept;

}  // namespace fudsa::detail
