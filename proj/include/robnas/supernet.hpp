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

#include <filesystem>
#include <optional>
#include <vector>

#include "robnas/arch.hpp"
#include "robnas/model.hpp"

namespace robnas::net {

/// Macro skeleton around the searched cells:
///
///   stem (dw3x3 -> pw1x1 -> norm, C0 channels)
///   cell_0 .. cell_{L-1}, each fed by the outputs of the previous two
///   stages; a reduction block (avgpool2x2 -> pw1x1 -> norm) follows each
///   listed position and feeds both inputs of the next cell
///   head (global average pool -> linear)
///
/// Cells at stage s use C0 * 2^s channels per node and output 4x that.
struct MacroConfig {
  std::size_t cells = 2;
  std::size_t stem_channels = 8;
  /// Cells after which a reduction block runs; nullopt means {L/3, 2L/3}.
  std::optional<std::vector<std::size_t>> reductions;
  std::size_t num_classes = 10;
  std::size_t in_channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;

  /// Sorted, de-duplicated positions; throws when out of range.
  std::vector<std::size_t> reduction_positions() const;
  void validate() const;
};

struct CellLayout {
  std::size_t node_channels;
  std::size_t prev_prev_channels;
  std::size_t prev_channels;
  std::size_t height;
  std::size_t width;
  bool reduce_after;
};

/// Channel/spatial bookkeeping derived from a MacroConfig.
struct MacroLayout {
  std::vector<CellLayout> cells;
  std::size_t head_features;

  static MacroLayout from(const MacroConfig& macro, const arch::CellSpace& space);
};

struct PreSlots {
  std::size_t pw;
  NormSlots norm;
};
struct SepSlots {
  std::size_t dw, pw;
  NormSlots norm;
};
struct StemSlots {
  std::size_t dw, pw;
  NormSlots norm;
};

/// Weight-sharing network holding one weight set per (cell, edge, conv) plus
/// the fixed skeleton. Any architecture in the space is evaluated by masking.
class Supernet {
 public:
  Supernet(MacroConfig macro, arch::CellSpace space, Rng& rng);

  const MacroConfig& macro() const { return macro_; }
  const arch::CellSpace& space() const { return space_; }
  const MacroLayout& layout() const { return layout_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  std::size_t parameter_count() const { return params_.trainable_count(); }

  /// Masked forward: every edge computes sum_k alpha_k * o_k(input).
  template <class T>
  BasicVar<T> forward(BasicForwardContext<T>& ctx, const arch::ArchParams& alpha,
                      BasicVar<T> input) const;

  /// Throws unless `alpha` fits this space and cell count.
  void check_alpha(const arch::ArchParams& alpha) const;

  std::vector<NamedTensor> checkpoint() const { return params_.to_records(); }
  void load(const std::vector<NamedTensor>& records) { params_.load_records(records); }

 private:
  struct CellSlots {
    PreSlots pre[2];
    std::vector<SepSlots> sep;
  };

  MacroConfig macro_;
  arch::CellSpace space_;
  MacroLayout layout_;
  ParameterSet params_;
  StemSlots stem_{};
  std::vector<CellSlots> cells_;
  std::vector<std::optional<PreSlots>> reduce_;
  std::size_t head_w_ = 0, head_b_ = 0;
};

Supernet build_supernet(const MacroConfig& macro, const arch::CellSpace& space, Rng& rng);

/// Supernet restricted to one architecture, as a Classifier.
class MaskedSupernet : public Classifier {
 public:
  MaskedSupernet(const Supernet& net, arch::ArchParams alpha);

  Var forward(ForwardContext& ctx, Var input) const override;
  BasicVar<double> forward(BasicForwardContext<double>& ctx, BasicVar<double> input) const override;
  std::size_t num_cells() const override { return net_->macro().cells; }
  const arch::ArchParams& alpha() const { return alpha_; }

 private:
  const Supernet* net_;
  arch::ArchParams alpha_;
};

/// Standalone network for one architecture, owning copies of exactly the
/// weights its active genes reference (plus the fixed skeleton).
class Network : public Classifier {
 public:
  Var forward(ForwardContext& ctx, Var input) const override;
  BasicVar<double> forward(BasicForwardContext<double>& ctx, BasicVar<double> input) const override;
  std::size_t num_cells() const override { return macro_.cells; }

  const arch::ArchParams& alpha() const { return alpha_; }
  const MacroConfig& macro() const { return macro_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  std::size_t parameter_count() const { return params_.trainable_count(); }
  std::vector<NamedTensor> checkpoint() const { return params_.to_records(); }
  void load(const std::vector<NamedTensor>& records) { params_.load_records(records); }

 private:
  friend Network extract_subnetwork(const Supernet& net, const arch::ArchParams& alpha);

  struct Contribution {
    int source;
    std::optional<SepSlots> conv;  // nullopt: identity
  };
  struct CellPlan {
    PreSlots pre[2];
    std::vector<std::vector<Contribution>> nodes;  // intermediate nodes in order
  };

  template <class T>
  BasicVar<T> run(BasicForwardContext<T>& ctx, BasicVar<T> input) const;

  MacroConfig macro_;
  MacroLayout layout_;
  arch::ArchParams alpha_;
  ParameterSet params_;
  StemSlots stem_{};
  std::vector<CellPlan> plans_;
  std::vector<std::optional<PreSlots>> reduce_;
  std::size_t head_w_ = 0, head_b_ = 0;
};

Network extract_subnetwork(const Supernet& net, const arch::ArchParams& alpha);

/// Gramian between a cell's input and output maps for one example:
/// G[a][b] = sum_{s,t} F_in[a,s,t] * F_out[b,s,t] / (h*w). Inputs are
/// [c,h,w]; result is [c_in, c_out].
Tensor fsp_matrix(const Tensor& f_in, const Tensor& f_out);

/// Eval-mode forward recording every cell's input and output.
FeatureTrace trace_features(const Classifier& model, const Tensor& images);

/// Per-cell mean over the batch of ||G_l(x) - G_l(x')||_F^2.
std::vector<double> fsp_distance(const Classifier& model, const Tensor& clean,
                                 const Tensor& adversarial);

/// Writes a trace as named tensors "cell{l}/in", "cell{l}/out".
void save_feature_trace(const std::filesystem::path& path, const FeatureTrace& trace);

}  // namespace robnas::net
