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

// Reference supernet training without any attack: the same shuffle and
// architecture draws as robust training, a train-mode forward on the clean
// batch and a hand-written momentum update.

#pragma once

#include <map>
#include <numeric>

#include "robnas/adversary.hpp"

namespace robnas::testing {

inline void plain_sgd_search(net::Supernet& net, const Dataset& data, const adv::TrainConfig& cfg, Rng& rng) {
  ParameterSet& ps = net.parameters();
  std::map<const Tensor*, std::vector<float>> velocity;
  std::vector<std::size_t> order(data.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));
    const double lr = cfg.lr_at(epoch);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      std::span<const std::size_t> idx(order.data() + start, len);
      const arch::ArchParams alpha = arch::sample_alpha(rng, net.space(), arch::SearchMode::CellBased, net.macro().cells);
      const std::vector<int> y = data.gather_labels(idx);
      Tape tape;
      ForwardContext ctx(tape, Phase::Train, true);
      Var loss = ops::softmax_cross_entropy(net.forward(ctx, alpha, tape.constant(data.gather_images(idx))), y);
      tape.backward(loss);
      for (const auto& [param, var] : ctx.bound) {
        const Tensor g = tape.grad(var);
        auto [it, fresh] = velocity.try_emplace(param, g.data().begin(), g.data().end());
        std::vector<float>& v = it->second;
        if (!fresh)
          for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(cfg.momentum) * v[i] + g[i];
        Tensor* w = ps.mutable_from(param);
        for (std::size_t i = 0; i < v.size(); ++i) (*w)[i] -= static_cast<float>(lr) * v[i];
      }
      commit_norm_updates(ps, ctx);
    }
  }
}

}  // namespace robnas::testing
