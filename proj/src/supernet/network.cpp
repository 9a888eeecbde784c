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

#include "robnas/supernet.hpp"

namespace robnas::net {

using arch::ArchParams;
using arch::Op;

namespace {

// Copies one tensor by name from the supernet bank into `dst`.
std::size_t copy_param(ParameterSet& dst, const ParameterSet& src, const std::string& name) {
  const auto i = src.find(name);
  if (!i) throw std::logic_error("supernet has no parameter " + name);
  return dst.add(name, src.at(*i), src.trainable(*i));
}

NormSlots copy_norm(ParameterSet& dst, const ParameterSet& src, const std::string& prefix) {
  NormSlots s{};
  s.gamma = copy_param(dst, src, prefix + "/gamma");
  s.beta = copy_param(dst, src, prefix + "/beta");
  s.mean = copy_param(dst, src, prefix + "/running_mean");
  s.var = copy_param(dst, src, prefix + "/running_var");
  return s;
}

}  // namespace

Network extract_subnetwork(const Supernet& net, const ArchParams& alpha) {
  net.check_alpha(alpha);
  const ParameterSet& bank = net.parameters();
  const auto& space = net.space();

  Network out;
  out.macro_ = net.macro();
  out.layout_ = net.layout();
  out.alpha_ = alpha;
  ParameterSet& ps = out.params_;

  out.stem_.dw = copy_param(ps, bank, "stem/dw");
  out.stem_.pw = copy_param(ps, bank, "stem/pw");
  out.stem_.norm = copy_norm(ps, bank, "stem/norm");

  for (std::size_t l = 0; l < out.macro_.cells; ++l) {
    const std::string cell = "cell" + std::to_string(l);
    Network::CellPlan plan;
    for (int k = 0; k < 2; ++k) {
      const std::string p = cell + "/pre" + std::to_string(k);
      plan.pre[k] = PreSlots{copy_param(ps, bank, p + "/pw"), copy_norm(ps, bank, p + "/norm")};
    }
    const auto& genes = alpha.for_cell(l);
    for (int j = 2; j < space.num_nodes(); ++j) {
      std::vector<Network::Contribution> inputs;
      for (std::size_t e : space.incoming(j)) {
        const int src = space.edge(e).from;
        if (genes[e][static_cast<std::size_t>(Op::SepConv3x3)]) {
          const std::string p = cell + "/edge" + std::to_string(e) + "/sep";
          SepSlots s{copy_param(ps, bank, p + "/dw"), copy_param(ps, bank, p + "/pw"),
                     copy_norm(ps, bank, p + "/norm")};
          inputs.push_back({src, s});
        }
        if (genes[e][static_cast<std::size_t>(Op::Identity)]) inputs.push_back({src, std::nullopt});
      }
      plan.nodes.push_back(std::move(inputs));
    }
    out.plans_.push_back(std::move(plan));
    if (out.layout_.cells[l].reduce_after) {
      const std::string p = "reduce" + std::to_string(l);
      out.reduce_.push_back(PreSlots{copy_param(ps, bank, p + "/pw"), copy_norm(ps, bank, p + "/norm")});
    } else {
      out.reduce_.push_back(std::nullopt);
    }
  }
  out.head_w_ = copy_param(ps, bank, "head/weight");
  out.head_b_ = copy_param(ps, bank, "head/bias");
  return out;
}

template <class T>
BasicVar<T> Network::run(BasicForwardContext<T>& ctx, BasicVar<T> input) const {
  const Shape& xs = input.shape();
  if (xs.size() != 4 || xs[1] != macro_.in_channels || xs[2] != macro_.height ||
      xs[3] != macro_.width) {
    throw_shape_error("network.forward", xs, Shape{0, macro_.in_channels, macro_.height, macro_.width});
  }
  const ParameterSet& ps = params_;
  auto w = [&](std::size_t slot) { return ctx.bind(ps.at(slot)); };
  auto conv_norm = [&](const PreSlots& s, BasicVar<T> x) {
    return ctx.norm(ps, s.norm, ops::pointwise_conv(x, w(s.pw)));
  };

  BasicVar<T> stem = ops::depthwise_conv3x3(input, w(stem_.dw));
  stem = ctx.norm(ps, stem_.norm, ops::pointwise_conv(stem, w(stem_.pw)));

  BasicVar<T> s0 = stem, s1 = stem;
  for (std::size_t l = 0; l < plans_.size(); ++l) {
    const CellPlan& plan = plans_[l];
    const CellLayout& cl = layout_.cells[l];
    const BasicTensor<T> zeros(Shape{xs[0], cl.node_channels, cl.height, cl.width});

    // Values of nodes 0..N+1; a node that nothing feeds stays unset (zero).
    std::vector<std::optional<BasicVar<T>>> value(plan.nodes.size() + 2);
    auto fetch = [&](int i) -> std::optional<BasicVar<T>> {
      if (i == 0 && !value[0]) value[0] = conv_norm(plan.pre[0], s0);
      if (i == 1 && !value[1]) value[1] = conv_norm(plan.pre[1], s1);
      return value[static_cast<std::size_t>(i)];
    };

    for (std::size_t k = 0; k < plan.nodes.size(); ++k) {
      std::vector<BasicVar<T>> terms;
      for (const Contribution& c : plan.nodes[k]) {
        auto src = fetch(c.source);
        if (!c.conv) {
          if (src) terms.push_back(*src);
          continue;
        }
        BasicVar<T> y = ops::relu(src ? *src : ctx.tape.constant(zeros));
        y = ops::depthwise_conv3x3(y, w(c.conv->dw));
        y = ctx.norm(ps, c.conv->norm, ops::pointwise_conv(y, w(c.conv->pw)));
        terms.push_back(y);
      }
      if (terms.empty()) continue;
      BasicVar<T> total = terms.front();
      for (std::size_t t = 1; t < terms.size(); ++t) total = ops::add(total, terms[t]);
      value[k + 2] = total;
    }

    std::vector<BasicVar<T>> outputs;
    for (std::size_t k = 2; k < value.size(); ++k) {
      outputs.push_back(value[k] ? *value[k] : ctx.tape.constant(zeros));
    }
    BasicVar<T> cell_out = ops::concat_channels(std::span<const BasicVar<T>>(outputs));
    if (ctx.trace) {
      ctx.trace->cell_in.push_back(s1.value());
      ctx.trace->cell_out.push_back(cell_out.value());
    }
    if (reduce_[l]) {
      s0 = s1 = conv_norm(*reduce_[l], ops::avg_pool2x2(cell_out));
    } else {
      s0 = s1;
      s1 = cell_out;
    }
  }
  return ops::linear(ops::global_avg_pool(s1), w(head_w_), w(head_b_));
}

Var Network::forward(ForwardContext& ctx, Var input) const { return run(ctx, input); }

BasicVar<double> Network::forward(BasicForwardContext<double>& ctx, BasicVar<double> input) const {
  return run(ctx, input);
}

}  // namespace robnas::net
