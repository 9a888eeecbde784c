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

#include <algorithm>

namespace robnas::net {

using arch::ArchParams;
using arch::CellSpace;
using arch::Op;

std::vector<std::size_t> MacroConfig::reduction_positions() const {
  std::vector<std::size_t> pos =
      reductions ? *reductions : std::vector<std::size_t>{cells / 3, 2 * cells / 3};
  std::sort(pos.begin(), pos.end());
  pos.erase(std::unique(pos.begin(), pos.end()), pos.end());
  for (auto p : pos) {
    if (p >= cells) {
      throw std::invalid_argument("reduction position " + std::to_string(p) + " out of range for " +
                                  std::to_string(cells) + " cells");
    }
  }
  return pos;
}

void MacroConfig::validate() const {
  if (cells == 0) throw std::invalid_argument("macro config: need at least one cell");
  if (stem_channels == 0) throw std::invalid_argument("macro config: stem channels must be positive");
  if (num_classes < 2) throw std::invalid_argument("macro config: need at least two classes");
  if (in_channels == 0 || height == 0 || width == 0) {
    throw std::invalid_argument("macro config: empty input shape");
  }
  const auto pos = reduction_positions();
  if ((height >> pos.size()) == 0 || (width >> pos.size()) == 0) {
    throw std::invalid_argument("macro config: " + std::to_string(pos.size()) +
                                " reductions exceed input extent " + std::to_string(height) + "x" +
                                std::to_string(width));
  }
}

MacroLayout MacroLayout::from(const MacroConfig& macro, const CellSpace& space) {
  macro.validate();
  const auto pos = macro.reduction_positions();
  const std::size_t n = static_cast<std::size_t>(space.intermediate_nodes());
  MacroLayout lay;
  std::size_t c = macro.stem_channels;
  std::size_t prev_prev = c, prev = c;
  std::size_t h = macro.height, w = macro.width;
  for (std::size_t l = 0; l < macro.cells; ++l) {
    const bool reduce = std::binary_search(pos.begin(), pos.end(), l);
    lay.cells.push_back({c, prev_prev, prev, h, w, reduce});
    if (reduce) {
      c *= 2;
      prev_prev = prev = c;
      h /= 2;
      w /= 2;
    } else {
      prev_prev = prev;
      prev = n * c;
    }
  }
  lay.head_features = prev;
  return lay;
}

namespace {

std::string cell_prefix(std::size_t l) { return "cell" + std::to_string(l); }
std::string edge_prefix(std::size_t l, std::size_t e) {
  return cell_prefix(l) + "/edge" + std::to_string(e) + "/sep";
}

}  // namespace

Supernet::Supernet(MacroConfig macro, CellSpace space, Rng& rng)
    : macro_(std::move(macro)), space_(std::move(space)), layout_(MacroLayout::from(macro_, space_)) {
  const std::size_t c0 = macro_.stem_channels, cin = macro_.in_channels;
  stem_.dw = params_.add("stem/dw", init_uniform(rng, {cin, 3, 3}, 9));
  stem_.pw = params_.add("stem/pw", init_uniform(rng, {c0, cin}, cin));
  stem_.norm = add_norm(params_, "stem/norm", c0);

  const std::size_t n = static_cast<std::size_t>(space_.intermediate_nodes());
  for (std::size_t l = 0; l < macro_.cells; ++l) {
    const CellLayout& cl = layout_.cells[l];
    const std::size_t c = cl.node_channels;
    CellSlots slots;
    const std::size_t in_ch[2] = {cl.prev_prev_channels, cl.prev_channels};
    for (int k = 0; k < 2; ++k) {
      const std::string p = cell_prefix(l) + "/pre" + std::to_string(k);
      slots.pre[k].pw = params_.add(p + "/pw", init_uniform(rng, {c, in_ch[k]}, in_ch[k]));
      slots.pre[k].norm = add_norm(params_, p + "/norm", c);
    }
    for (std::size_t e = 0; e < space_.num_edges(); ++e) {
      const std::string p = edge_prefix(l, e);
      SepSlots s{};
      s.dw = params_.add(p + "/dw", init_uniform(rng, {c, 3, 3}, 9));
      s.pw = params_.add(p + "/pw", init_uniform(rng, {c, c}, c));
      s.norm = add_norm(params_, p + "/norm", c);
      slots.sep.push_back(s);
    }
    cells_.push_back(std::move(slots));
    if (cl.reduce_after) {
      const std::string p = "reduce" + std::to_string(l);
      PreSlots r{};
      r.pw = params_.add(p + "/pw", init_uniform(rng, {2 * c, n * c}, n * c));
      r.norm = add_norm(params_, p + "/norm", 2 * c);
      reduce_.push_back(r);
    } else {
      reduce_.push_back(std::nullopt);
    }
  }
  const std::size_t d = layout_.head_features;
  head_w_ = params_.add("head/weight", init_uniform(rng, {macro_.num_classes, d}, d));
  head_b_ = params_.add("head/bias", init_uniform(rng, {macro_.num_classes}, d));
}

Supernet build_supernet(const MacroConfig& macro, const CellSpace& space, Rng& rng) {
  return Supernet(macro, space, rng);
}

void Supernet::check_alpha(const ArchParams& alpha) const {
  if (alpha.nodes != space_.intermediate_nodes()) {
    throw arch::ArchError("architecture has N=" + std::to_string(alpha.nodes) +
                          ", supernet space has N=" + std::to_string(space_.intermediate_nodes()));
  }
  alpha.validate(macro_.cells);
}

template <class T>
BasicVar<T> Supernet::forward(BasicForwardContext<T>& ctx, const ArchParams& alpha,
                              BasicVar<T> input) const {
  check_alpha(alpha);
  const Shape& xs = input.shape();
  if (xs.size() != 4 || xs[1] != macro_.in_channels || xs[2] != macro_.height ||
      xs[3] != macro_.width) {
    throw_shape_error("supernet.forward", xs,
                      Shape{0, macro_.in_channels, macro_.height, macro_.width});
  }
  const std::size_t batch = xs[0];
  auto pw_norm = [&](const PreSlots& s, BasicVar<T> x) {
    return ctx.norm(params_, s.norm, ops::pointwise_conv(x, ctx.bind(params_.at(s.pw))));
  };

  BasicVar<T> h = ops::depthwise_conv3x3(input, ctx.bind(params_.at(stem_.dw)));
  h = ops::pointwise_conv(h, ctx.bind(params_.at(stem_.pw)));
  h = ctx.norm(params_, stem_.norm, h);

  BasicVar<T> prev_prev = h, prev = h;
  const int n_nodes = space_.num_nodes();
  for (std::size_t l = 0; l < macro_.cells; ++l) {
    const CellLayout& cl = layout_.cells[l];
    const auto& genes = alpha.for_cell(l);
    const auto& slots = cells_[l];
    const Shape node_shape{batch, cl.node_channels, cl.height, cl.width};

    // nodes[i] is empty while node i is either unevaluated (inputs) or zero.
    std::vector<std::optional<BasicVar<T>>> nodes(n_nodes);
    std::optional<BasicVar<T>> zero;
    auto zero_map = [&] {
      if (!zero) zero = ctx.tape.constant(BasicTensor<T>(node_shape));
      return *zero;
    };
    auto node_value = [&](int i) -> std::optional<BasicVar<T>> {
      if (i < 2 && !nodes[i]) nodes[i] = pw_norm(slots.pre[i], i == 0 ? prev_prev : prev);
      return nodes[i];
    };

    for (int j = 2; j < n_nodes; ++j) {
      std::optional<BasicVar<T>> acc;
      auto accumulate = [&](BasicVar<T> v) { acc = acc ? ops::add(*acc, v) : v; };
      for (std::size_t e : space_.incoming(j)) {
        const int i = space_.edge(e).from;
        if (genes[e][static_cast<std::size_t>(Op::SepConv3x3)]) {
          const SepSlots& s = slots.sep[e];
          auto src = node_value(i);
          BasicVar<T> y = ops::relu(src ? *src : zero_map());
          y = ops::depthwise_conv3x3(y, ctx.bind(params_.at(s.dw)));
          y = ops::pointwise_conv(y, ctx.bind(params_.at(s.pw)));
          accumulate(ctx.norm(params_, s.norm, y));
        }
        if (genes[e][static_cast<std::size_t>(Op::Identity)]) {
          if (auto src = node_value(i)) accumulate(*src);
        }
      }
      nodes[j] = acc;
    }

    std::vector<BasicVar<T>> parts;
    for (int j = 2; j < n_nodes; ++j) parts.push_back(nodes[j] ? *nodes[j] : zero_map());
    BasicVar<T> out = ops::concat_channels(std::span<const BasicVar<T>>(parts));
    if (ctx.trace) {
      ctx.trace->cell_in.push_back(prev.value());
      ctx.trace->cell_out.push_back(out.value());
    }
    if (reduce_[l]) {
      BasicVar<T> r = pw_norm(*reduce_[l], ops::avg_pool2x2(out));
      prev_prev = prev = r;
    } else {
      prev_prev = prev;
      prev = out;
    }
  }
  BasicVar<T> pooled = ops::global_avg_pool(prev);
  return ops::linear(pooled, ctx.bind(params_.at(head_w_)), ctx.bind(params_.at(head_b_)));
}

template Var Supernet::forward(ForwardContext&, const ArchParams&, Var) const;
template BasicVar<double> Supernet::forward(BasicForwardContext<double>&, const ArchParams&,
                                            BasicVar<double>) const;

MaskedSupernet::MaskedSupernet(const Supernet& net, ArchParams alpha)
    : net_(&net), alpha_(std::move(alpha)) {
  net_->check_alpha(alpha_);
}

Var MaskedSupernet::forward(ForwardContext& ctx, Var input) const {
  return net_->forward(ctx, alpha_, input);
}

BasicVar<double> MaskedSupernet::forward(BasicForwardContext<double>& ctx,
                                         BasicVar<double> input) const {
  return net_->forward(ctx, alpha_, input);
}

}  // namespace robnas::net
