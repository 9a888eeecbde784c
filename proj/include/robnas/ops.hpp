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

#include <span>
#include <vector>

#include "robnas/tape.hpp"

// Differentiable primitives. Image tensors are NCHW. Every function records
// one node on the tape of its first argument and throws ShapeError naming the
// operation when operands do not conform.
namespace robnas::ops {

enum class NormMode { Train, Eval };

inline constexpr double kNormEpsilon = 1e-5;
/// Retained fraction of the running statistic per update.
inline constexpr float kNormMomentum = 0.9f;

/// Batch moments observed by channel_norm in train mode.
struct NormBatchStats {
  std::vector<double> mean;
  std::vector<double> var_unbiased;
};

template <class T> BasicVar<T> add(BasicVar<T> a, BasicVar<T> b);
template <class T> BasicVar<T> mul(BasicVar<T> a, BasicVar<T> b);
/// [m,k] x [k,n] -> [m,n]
template <class T> BasicVar<T> matmul(BasicVar<T> a, BasicVar<T> b);
/// Sum of all elements, shape [].
template <class T> BasicVar<T> sum(BasicVar<T> x);
template <class T> BasicVar<T> relu(BasicVar<T> x);

/// Per-channel 3x3 filter, stride 1, zero padding 1. kernel is [C,3,3].
template <class T> BasicVar<T> depthwise_conv3x3(BasicVar<T> x, BasicVar<T> kernel);
/// 1x1 convolution; weight is [C_out, C_in], no bias.
template <class T> BasicVar<T> pointwise_conv(BasicVar<T> x, BasicVar<T> weight);

/// Per-channel normalisation with learned scale/shift. Train mode uses batch
/// moments (reported through `observed`), eval mode the frozen running
/// statistics, which makes it an affine map of its input.
template <class T>
BasicVar<T> channel_norm(BasicVar<T> x, BasicVar<T> gamma, BasicVar<T> beta,
                         const Tensor& running_mean, const Tensor& running_var, NormMode mode,
                         NormBatchStats* observed = nullptr);

/// rm <- m*rm + (1-m)*mean, rv <- m*rv + (1-m)*var
void update_running_stats(Tensor& running_mean, Tensor& running_var, const NormBatchStats& batch,
                          float momentum = kNormMomentum);

template <class T> BasicVar<T> avg_pool2x2(BasicVar<T> x);
/// [N,C,H,W] -> [N,C]
template <class T> BasicVar<T> global_avg_pool(BasicVar<T> x);
template <class T> BasicVar<T> concat_channels(std::span<const BasicVar<T>> parts);
/// x [N,D], weight [O,D], bias [O] -> [N,O]
template <class T> BasicVar<T> linear(BasicVar<T> x, BasicVar<T> weight, BasicVar<T> bias);
/// Mean cross-entropy of softmax(logits) against integer labels, shape [].
template <class T>
BasicVar<T> softmax_cross_entropy(BasicVar<T> logits, std::span<const int> labels);

}  // namespace robnas::ops
