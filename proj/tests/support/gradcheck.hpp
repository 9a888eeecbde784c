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

// Central finite-difference oracle for reverse-mode gradients.
//
// The analytic gradient comes from the float tape. The finite differences are
// taken on a double-precision evaluation of the same forward graph: with
// h = 1e-3 single precision round-off alone would swamp the difference
// quotient. Coordinates whose +/-h probes flip any ReLU are skipped and
// replaced, since the function is not differentiable across the kink.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "robnas/ops.hpp"
#include "robnas/rng.hpp"

namespace robnas::testing {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
};

inline double rel_error(double a, double b) {
  const double den = std::max(std::abs(a), std::abs(b));
  return den == 0.0 ? 0.0 : std::abs(a - b) / den;
}

template <class T>
std::vector<bool> relu_pattern(const BasicTape<T>& tape) {
  std::vector<bool> out;
  for (std::size_t i = 0; i < tape.size(); ++i) {
    if (std::strcmp(tape.op_name(i), "relu") != 0) continue;
    for (T v : tape.value_at(i).data()) out.push_back(v > T(0));
  }
  return out;
}

/// `fn(tape, vars)` must build a scalar loss from the leaf vars and work for
/// both float and double tapes (a generic lambda). Checks `coords` random
/// coordinates of every input.
template <class Fn>
GradCheckReport check_gradients(Fn&& fn, const std::vector<Tensor>& inputs, Rng& rng,
                                std::size_t coords = 10, double h = 1e-3) {
  GradCheckReport rep;

  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.leaf(t, true));
  Var loss = fn(tape, vars);
  tape.backward(loss);

  auto eval = [&](const std::vector<BasicTensor<double>>& xs, std::vector<bool>* pattern) {
    BasicTape<double> dt;
    std::vector<BasicVar<double>> dv;
    for (const auto& x : xs) dv.push_back(dt.leaf(x, false));
    const double v = fn(dt, dv).value()[0];
    if (pattern) *pattern = relu_pattern(dt);
    return v;
  };

  std::vector<BasicTensor<double>> base;
  for (const auto& t : inputs) base.push_back(t.cast<double>());
  std::vector<bool> base_pattern;
  eval(base, &base_pattern);

  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor analytic = tape.grad(vars[k]);
    std::size_t done = 0, attempts = 0;
    while (done < coords && attempts < coords * 50) {
      ++attempts;
      const std::size_t i = rng.below(inputs[k].numel());
      auto plus = base, minus = base;
      plus[k][i] += h;
      minus[k][i] -= h;
      std::vector<bool> pp, pm;
      const double fp = eval(plus, &pp);
      const double fm = eval(minus, &pm);
      if (pp != base_pattern || pm != base_pattern) {
        ++rep.skipped_kinks;
        continue;
      }
      const double fd = (fp - fm) / (2.0 * h);
      rep.max_rel_error = std::max(rep.max_rel_error, rel_error(analytic[i], fd));
      ++rep.checked;
      ++done;
    }
  }
  return rep;
}

/// Random tensor with entries uniform in [lo, hi).
inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

}  // namespace robnas::testing
