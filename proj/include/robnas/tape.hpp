/*
 * Copyright 2026 The robnas Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <deque>
#include <functional>

#include "robnas/tensor.hpp"

namespace robnas {

template <class T>
class BasicTape;

/// Handle to a value recorded on a tape.
template <class T>
struct BasicVar {
  BasicTape<T>* tape = nullptr;
  std::uint32_t id = 0;

  bool valid() const { return tape != nullptr; }
  const BasicTensor<T>& value() const { return tape->value(*this); }
  const Shape& shape() const { return value().shape(); }
};

/// Append-only record of primitive evaluations. Nodes are stored in creation
/// order, so inputs always precede their consumers and the reverse sweep in
/// backward() is a valid reverse topological order.
///
/// A tape is single-threaded; separate tapes may run concurrently.
template <class T>
class BasicTape {
 public:
  using TensorT = BasicTensor<T>;
  using VarT = BasicVar<T>;
  /// Receives the gradient of the node's output and accumulates into inputs.
  using BackwardFn = std::function<void(BasicTape&, const TensorT&)>;

  VarT leaf(TensorT value, bool requires_grad);
  VarT leaf(const TensorT& value) { return leaf(value, value.requires_grad()); }
  VarT constant(TensorT value) { return leaf(std::move(value), false); }

  /// Records an operation result. `needs_grad` should be true iff any input
  /// requires a gradient; `fn` is dropped otherwise.
  VarT record(const char* op, TensorT value, bool needs_grad, BackwardFn fn);

  /// Reverse sweep from a scalar loss. Gradients accumulate over fan-out and
  /// across repeated calls until zero_grad(). Only leaves keep their
  /// gradient; an interior node's buffer is released once propagated.
  void backward(VarT loss);
  void zero_grad();

  const TensorT& value(VarT v) const { return nodes_.at(v.id).value; }
  bool requires_grad(VarT v) const { return nodes_.at(v.id).requires_grad; }
  /// True once some gradient has flowed into `v`.
  bool has_grad(VarT v) const { return nodes_.at(v.id).has_grad; }
  /// Gradient of the last backward() loss w.r.t. `v`; zeros when unreachable.
  TensorT grad(VarT v) const;
  /// Accumulator for node `id`, zero-initialised on first use.
  TensorT& grad_buffer(std::uint32_t id);

  std::size_t size() const { return nodes_.size(); }
  const char* op_name(std::size_t id) const { return nodes_.at(id).op; }
  const TensorT& value_at(std::size_t id) const { return nodes_.at(id).value; }

 private:
  struct Node {
    const char* op = "";
    TensorT value;
    TensorT grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;
};

using Tape = BasicTape<float>;
using Var = BasicVar<float>;

extern template class BasicTape<float>;
extern template class BasicTape<double>;

}  // namespace robnas
