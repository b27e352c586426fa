// Copyright 2026 The fudsa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <initializer_list>
#include <vector>

#include "tensor/tensor.hpp"

namespace fudsa {

enum class OpKind {
  Add,
  Mul,
  Scale,
  Sum,
  Conv2d,
  MaxPool2,
  GlobalAvgPool,
  Resize,
  Relu,
  Sigmoid,
  Dense,
  Concat,
  Slice,
  TverskyIndex,
  FocalPower,
};

const char* op_name(OpKind op) noexcept;

template <typename T>
struct TapeNode {
  OpKind op;
  std::vector<TensorId> inputs;
  TensorId output;
  /// Reads the output gradient and accumulates into input gradients. The
  /// closure owns handles to every tensor it touches.
  std::function<void()> backward;
};

/// Forward operations in recording order. Confined to one thread.
template <typename T>
class Tape {
 public:
  void push(TapeNode<T> node) { nodes_.push_back(std::move(node)); }
  const std::vector<TapeNode<T>>& nodes() const noexcept { return nodes_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  void clear() noexcept { nodes_.clear(); }

 private:
  std::vector<TapeNode<T>> nodes_;
};

/// The tape ops record onto in this thread, or nullptr (inference mode).
template <typename T>
Tape<T>* active_tape() noexcept;

/// Installs a tape as the thread's active tape for the scope's lifetime.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

/// Suspends recording for the scope's lifetime.
template <typename T>
class NoTapeScope {
 public:
  NoTapeScope();
  ~NoTapeScope();
  NoTapeScope(const NoTapeScope&) = delete;
  NoTapeScope& operator=(const NoTapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

/// Records `backward` for `output` when a tape is active and any input
/// tracks gradients; marks the output as gradient-tracking in that case.
template <typename T>
void record(OpKind op, std::initializer_list<const Tensor<T>*> inputs,
            Tensor<T>& output, std::function<void()> backward);
template <typename T>
void record(OpKind op, const std::vector<Tensor<T>>& inputs, Tensor<T>& output,
            std::function<void()> backward);

/// Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. Gradients
/// accumulate; callers zero them between steps.
template <typename T>
void backward(const Tensor<T>& loss, Tape<T>& tape);

namespace testing {

/// Test hook: when set, the sigmoid backward rule is deliberately wrong.
void set_backward_fault(bool enabled) noexcept;
bool backward_fault() noexcept;

}  // namespace testing

}  // namespace fudsa
