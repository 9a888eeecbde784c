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

#include "robnas/model.hpp"

#include <algorithm>
#include <cmath>

namespace robnas {

std::size_t ParameterSet::add(std::string name, Tensor value, bool trainable) {
  if (index_.contains(name)) throw std::invalid_argument("duplicate parameter " + name);
  index_.emplace(name, tensors_.size());
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(value));
  trainable_.push_back(trainable);
  return tensors_.size() - 1;
}

std::optional<std::size_t> ParameterSet::find(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const Tensor& ParameterSet::get(std::string_view name) const {
  auto i = find(name);
  if (!i) throw std::out_of_range("no parameter named " + std::string(name));
  return tensors_[*i];
}

Tensor* ParameterSet::mutable_from(const Tensor* p) {
  if (tensors_.empty() || p < tensors_.data() || p >= tensors_.data() + tensors_.size()) {
    return nullptr;
  }
  return &tensors_[static_cast<std::size_t>(p - tensors_.data())];
}

std::size_t ParameterSet::trainable_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < tensors_.size(); ++i)
    if (trainable_[i]) n += tensors_[i].numel();
  return n;
}

std::vector<NamedTensor> ParameterSet::to_records() const {
  std::vector<NamedTensor> out;
  out.reserve(tensors_.size());
  for (const auto& [name, i] : index_) out.push_back({name, tensors_[i]});
  return out;
}

void ParameterSet::load_records(const std::vector<NamedTensor>& records) {
  if (records.size() != tensors_.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(records.size()) +
                          " tensors, model expects " + std::to_string(tensors_.size()));
  }
  for (const auto& rec : records) {
    auto i = find(rec.name);
    if (!i) throw CheckpointError("checkpoint tensor '" + rec.name + "' not in model");
    if (tensors_[*i].shape() != rec.tensor.shape()) {
      throw CheckpointError("checkpoint tensor '" + rec.name + "' has shape " +
                            shape_str(rec.tensor.shape()) + ", model expects " +
                            shape_str(tensors_[*i].shape()));
    }
  }
  for (const auto& rec : records) tensors_[*find(rec.name)].storage() = rec.tensor.storage();
}

NormSlots add_norm(ParameterSet& ps, const std::string& prefix, std::size_t channels) {
  NormSlots s{};
  s.gamma = ps.add(prefix + "/gamma", Tensor({channels}, 1.0f));
  s.beta = ps.add(prefix + "/beta", Tensor({channels}, 0.0f));
  s.mean = ps.add(prefix + "/running_mean", Tensor({channels}, 0.0f), false);
  s.var = ps.add(prefix + "/running_var", Tensor({channels}, 1.0f), false);
  return s;
}

Tensor init_uniform(Rng& rng, Shape shape, std::size_t fan_in) {
  Tensor t(std::move(shape));
  const double b = std::sqrt(1.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-b, b));
  return t;
}

template <class T>
BasicVar<T> BasicForwardContext<T>::bind(const Tensor& param) {
  BasicVar<T> v;
  if constexpr (std::is_same_v<T, float>) {
    v = tape.leaf(param, param_grads);
  } else {
    v = tape.leaf(param.template cast<T>(), param_grads);
  }
  if (param_grads) bound.emplace_back(&param, v);
  return v;
}

template <class T>
BasicVar<T> BasicForwardContext<T>::norm(const ParameterSet& ps, const NormSlots& slots,
                                          BasicVar<T> x) {
  const Tensor& mean = ps.at(slots.mean);
  const Tensor& var = ps.at(slots.var);
  auto gamma = bind(ps.at(slots.gamma));
  auto beta = bind(ps.at(slots.beta));
  if (phase == Phase::Train) {
    NormUpdate upd{&mean, &var, {}};
    auto y = ops::channel_norm(x, gamma, beta, mean, var, ops::NormMode::Train, &upd.stats);
    norm_updates.push_back(std::move(upd));
    return y;
  }
  return ops::channel_norm(x, gamma, beta, mean, var, ops::NormMode::Eval);
}

template struct BasicForwardContext<float>;
template struct BasicForwardContext<double>;

void commit_norm_updates(ParameterSet& ps, const ForwardContext& ctx) {
  for (const auto& upd : ctx.norm_updates) {
    Tensor* mean = ps.mutable_from(upd.mean);
    Tensor* var = ps.mutable_from(upd.var);
    if (!mean || !var) throw std::logic_error("norm update refers to a foreign parameter set");
    ops::update_running_stats(*mean, *var, upd.stats);
  }
}

Tensor predict_logits(const Classifier& model, const Tensor& images) {
  Tape tape;
  ForwardContext ctx(tape, Phase::Eval, false);
  return model.forward(ctx, tape.constant(images)).value();
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float* row = logits.raw() + i * k;
    out[i] = static_cast<int>(std::max_element(row, row + k) - row);
  }
  return out;
}

std::vector<int> predict_labels(const Classifier& model, const Tensor& images) {
  return argmax_rows(predict_logits(model, images));
}

}  // namespace robnas
