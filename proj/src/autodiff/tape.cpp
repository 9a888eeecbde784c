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

#include "robnas/tape.hpp"

namespace robnas {

template <class T>
typename BasicTape<T>::VarT BasicTape<T>::leaf(TensorT value, bool requires_grad) {
  Node node;
  node.op = "leaf";
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return VarT{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <class T>
typename BasicTape<T>::VarT BasicTape<T>::record(const char* op, TensorT value, bool needs_grad,
                                                 BackwardFn fn) {
  Node node;
  node.op = op;
  node.value = std::move(value);
  node.requires_grad = needs_grad;
  if (needs_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return VarT{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <class T>
void BasicTape<T>::backward(VarT loss) {
  if (loss.tape != this) throw std::invalid_argument("backward: loss recorded on another tape");
  Node& root = nodes_.at(loss.id);
  if (root.value.numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + shape_str(root.value.shape()));
  }
  if (!root.requires_grad) return;
  grad_buffer(loss.id)[0] += T(1);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.has_grad || !node.backward) continue;
    node.backward(*this, node.grad);
    node.grad = TensorT();
  }
}

template <class T>
void BasicTape<T>::zero_grad() {
  for (auto& node : nodes_) {
    node.grad = TensorT();
    node.has_grad = false;
  }
}

template <class T>
typename BasicTape<T>::TensorT BasicTape<T>::grad(VarT v) const {
  const Node& node = nodes_.at(v.id);
  if (node.has_grad && node.grad.numel() == node.value.numel()) return node.grad;
  return TensorT(node.value.shape());
}

template <class T>
typename BasicTape<T>::TensorT& BasicTape<T>::grad_buffer(std::uint32_t id) {
  Node& node = nodes_.at(id);
  if (!node.has_grad || node.grad.numel() != node.value.numel()) {
    node.grad = TensorT(node.value.shape());
    node.has_grad = true;
  }
  return node.grad;
}

template class BasicTape<float>;
template class BasicTape<double>;

}  // namespace robnas
