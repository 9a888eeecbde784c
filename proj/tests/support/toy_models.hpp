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

#include "robnas/model.hpp"

namespace robnas::testing {

/// Two-class model on the mean pixel m of a one-channel image:
/// logits = [0, w * m + b]. Cross-entropy for class 1 is log(1 + e^-(wm+b)).
class LogisticToy : public Classifier {
 public:
  LogisticToy(double w, double b) : w_(w), b_(b) {}

  Var forward(ForwardContext& ctx, Var x) const override { return run(ctx, x); }
  BasicVar<double> forward(BasicForwardContext<double>& ctx, BasicVar<double> x) const override {
    return run(ctx, x);
  }
  std::size_t num_cells() const override { return 0; }

 private:
  template <class T>
  BasicVar<T> run(BasicForwardContext<T>& ctx, BasicVar<T> x) const {
    auto m = ops::global_avg_pool(x);
    auto w = ctx.tape.constant(BasicTensor<T>({2, 1}, {T(0), T(w_)}));
    auto b = ctx.tape.constant(BasicTensor<T>({2}, {T(0), T(b_)}));
    return ops::linear(m, w, b);
  }
  double w_, b_;
};

/// logits = [0, -k * (m - c)^2] on the mean pixel m: class 0 loss rises as
/// m approaches c, so its input gradient points towards c.
class QuadraticToy : public Classifier {
 public:
  QuadraticToy(double k, double c) : k_(k), c_(c) {}

  Var forward(ForwardContext& ctx, Var x) const override { return run(ctx, x); }
  BasicVar<double> forward(BasicForwardContext<double>& ctx, BasicVar<double> x) const override {
    return run(ctx, x);
  }
  std::size_t num_cells() const override { return 0; }

 private:
  template <class T>
  BasicVar<T> run(BasicForwardContext<T>& ctx, BasicVar<T> x) const {
    auto m = ops::global_avg_pool(x);
    const std::size_t n = m.shape()[0];
    auto d = ops::add(m, ctx.tape.constant(BasicTensor<T>(Shape{n, 1}, T(-c_))));
    auto q = ops::mul(d, d);
    auto w = ctx.tape.constant(BasicTensor<T>({2, 1}, {T(0), T(-k_)}));
    auto b = ctx.tape.constant(BasicTensor<T>(Shape{2}, T(0)));
    return ops::linear(q, w, b);
  }
  double k_, c_;
};

}  // namespace robnas::testing
