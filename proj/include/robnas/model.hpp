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

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "robnas/checkpoint.hpp"
#include "robnas/ops.hpp"
#include "robnas/rng.hpp"

namespace robnas {

enum class Phase { Train, Eval };

/// Named float tensors with addresses that stay fixed once construction is
/// done. Running statistics live here too, flagged non-trainable.
class ParameterSet {
 public:
  std::size_t add(std::string name, Tensor value, bool trainable = true);

  std::size_t size() const { return tensors_.size(); }
  Tensor& at(std::size_t i) { return tensors_.at(i); }
  const Tensor& at(std::size_t i) const { return tensors_.at(i); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  bool trainable(std::size_t i) const { return trainable_.at(i); }
  std::optional<std::size_t> find(std::string_view name) const;
  const Tensor& get(std::string_view name) const;

  /// Maps an address handed out by at() back to its mutable slot.
  Tensor* mutable_from(const Tensor* p);

  /// Number of trainable scalars.
  std::size_t trainable_count() const;

  /// Records sorted by name.
  std::vector<NamedTensor> to_records() const;
  /// Requires exactly the same name set and shapes.
  void load_records(const std::vector<NamedTensor>& records);

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::vector<bool> trainable_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Slots of one channel_norm layer inside a ParameterSet.
struct NormSlots {
  std::size_t gamma, beta, mean, var;
};

NormSlots add_norm(ParameterSet& ps, const std::string& prefix, std::size_t channels);
/// uniform(-b, b) with b = sqrt(1 / fan_in)
Tensor init_uniform(Rng& rng, Shape shape, std::size_t fan_in);

/// Per-cell input/output feature maps captured during a forward pass.
template <class T>
struct BasicFeatureTrace {
  std::vector<BasicTensor<T>> cell_in;
  std::vector<BasicTensor<T>> cell_out;
};
using FeatureTrace = BasicFeatureTrace<float>;

/// Everything a forward pass needs besides weights and input.
template <class T>
struct BasicForwardContext {
  struct NormUpdate {
    const Tensor* mean;
    const Tensor* var;
    ops::NormBatchStats stats;
  };

  explicit BasicForwardContext(BasicTape<T>& t, Phase ph = Phase::Eval, bool grads = false)
      : tape(t), phase(ph), param_grads(grads) {}

  BasicTape<T>& tape;
  Phase phase;
  /// Parameter leaves require gradients.
  bool param_grads;
  BasicFeatureTrace<T>* trace = nullptr;
  /// Every parameter bound during the pass, with its tape handle.
  std::vector<std::pair<const Tensor*, BasicVar<T>>> bound;
  /// Batch moments to fold into running statistics after a train pass.
  std::vector<NormUpdate> norm_updates;

  BasicVar<T> bind(const Tensor& param);
  BasicVar<T> norm(const ParameterSet& ps, const NormSlots& slots, BasicVar<T> x);
};
using ForwardContext = BasicForwardContext<float>;

extern template struct BasicForwardContext<float>;
extern template struct BasicForwardContext<double>;

/// Applies collected train-mode moments to the running statistics in `ps`.
void commit_norm_updates(ParameterSet& ps, const ForwardContext& ctx);

/// Image classifier whose forward pass can be recorded on a tape. Forward is
/// const: the weights are read-only, and train-mode side effects are returned
/// through the context.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual Var forward(ForwardContext& ctx, Var input) const = 0;
  virtual BasicVar<double> forward(BasicForwardContext<double>& ctx,
                                   BasicVar<double> input) const = 0;
  virtual std::size_t num_cells() const = 0;
};

/// Eval-mode logits for a batch.
Tensor predict_logits(const Classifier& model, const Tensor& images);
std::vector<int> predict_labels(const Classifier& model, const Tensor& images);
std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace robnas
