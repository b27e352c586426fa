// Copyright 2026 The fudsa Authors
// SPDX-License-Identifier: Apache-2.0

#include "tensor/tape.hpp"

#include <atomic>

#include "common/error.hpp"

namespace fudsa {

namespace {

template <typename T>
Tape<T>*& tape_slot() noexcept {
  thread_local Tape<T>* slot = nullptr;
  return slot;
}

std::atomic<bool> g_backward_fault{false};

}  // namespace

const char* op_name(OpKind op) noexcept {
  switch (op) {
    case OpKind::Add: return "add";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::Sum: return "sum";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::MaxPool2: return "max_pool2";
    case OpKind::GlobalAvgPool: return "global_avg_pool";
    case OpKind::Resize: return "resize";
    case OpKind::Relu: return "relu";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Dense: return "dense";
    case OpKind::Concat: return "concat_channels";
    case OpKind::Slice: return "slice_channels";
    case OpKind::TverskyIndex: return "tversky_index";
    case OpKind::FocalPower: return "focal_power";
  }
  return "unknown";
}

template <typename T>
Tape<T>* active_tape() noexcept {
  return tape_slot<T>();
}

template <typename T>
TapeScope<T>::TapeScope(Tape<T>& tape) : previous_(tape_slot<T>()) {
  tape_slot<T>() = &tape;
}

template <typename T>
TapeScope<T>::~TapeScope() {
  tape_slot<T>() = previous_;
}

template <typename T>
NoTapeScope<T>::NoTapeScope() : previous_(tape_slot<T>()) {
  tape_slot<T>() = nullptr;
}

template <typename T>
NoTapeScope<T>::~NoTapeScope() {
  tape_slot<T>() = previous_;
}

template <typename T>
void record(OpKind op, std::initializer_list<const Tensor<T>*> inputs,
            Tensor<T>& output, std::function<void()> backward) {
  Tape<T>* tape = tape_slot<T>();
  if (tape == nullptr) return;
  bool tracked = false;
  std::vector<TensorId> ids;
  ids.reserve(inputs.size());
  for (const Tensor<T>* in : inputs) {
    if (in == nullptr || !in->defined()) continue;
    tracked = tracked || in->requires_grad();
    ids.push_back(in->id());
  }
  if (!tracked) return;
  output.set_requires_grad(true);
  tape->push(TapeNode<T>{op, std::move(ids), output.id(), std::move(backward)});
}

template <typename T>
void record(OpKind op, const std::vector<Tensor<T>>& inputs, Tensor<T>& output,
            std::function<void()> backward) {
  Tape<T>* tape = tape_slot<T>();
  if (tape == nullptr) return;
  bool tracked = false;
  std::vector<TensorId> ids;
  ids.reserve(inputs.size());
  for (const Tensor<T>& in : inputs) {
    tracked = tracked || in.requires_grad();
    ids.push_back(in.id());
  }
  if (!tracked) return;
  output.set_requires_grad(true);
  tape->push(TapeNode<T>{op, std::move(ids), output.id(), std::move(backward)});
}

template <typename T>
void backward(const Tensor<T>& loss, Tape<T>& tape) {
  const Shape& s = loss.shape();
  if (!(s == Shape{1, 1, 1, 1})) {
    fail(ErrorCode::InvalidArgument,
         "backward requires a (1,1,1,1) loss, got " + s.str());
  }
  if (!loss.requires_grad()) return;
  Tensor<T> seed = loss;
  seed.mutable_grad()[0] += T(1);
  const auto& nodes = tape.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    it->backward();
  }
}

namespace testing {

void set_backward_fault(bool enabled) noexcept { g_backward_fault.store(enabled); }
bool backward_fault() noexcept { return g_backward_fault.load(); }

}  // namespace testing

#define FUDSA_INSTANTIATE(T)                                                    \
  template Tape<T>* active_tape<T>() noexcept;                                  \
  template class TapeScope<T>;                                                  \
  template class NoTapeScope<T>;                                                \
  template void record<T>(OpKind, std::initializer_list<const Tensor<T>*>,      \
                          Tensor<T>&, std::function<void()>);                   \
  template void record<T>(OpKind, const std::vector<Tensor<T>>&, Tensor<T>&,    \
                          std::function<void()>);                               \
  template void backward<T>(const Tensor<T>&, Tape<T>&);

FUDSA_INSTANTIATE(float)
FUDSA_INSTANTIATE(double)

#undef FUDSA_INSTANTIATE

}  // namespace fudsa
