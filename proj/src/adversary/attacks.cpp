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

#include <algorithm>
#include <cmath>

#include "robnas/adversary.hpp"

namespace robnas::adv {

namespace {

float sign(float v) { return static_cast<float>((v > 0.0f) - (v < 0.0f)); }
float sign(double v) { return static_cast<float>((v > 0.0) - (v < 0.0)); }

void check_batch(const Tensor& x, std::span<const int> labels) {
  if (x.rank() == 0 || x.dim(0) != labels.size()) {
    throw_shape_error("attack", x.shape(), Shape{labels.size()});
  }
}

}  // namespace

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must lie in [0, 1]");
  if (!(step_size > 0.0)) throw std::invalid_argument("step_size must be positive");
  if (iterations < 1) throw std::invalid_argument("iterations must be at least 1");
  if (!(momentum >= 0.0)) throw std::invalid_argument("momentum must be non-negative");
}

std::string attack_name(AttackKind k) {
  switch (k) {
    case AttackKind::Fgsm: return "fgsm";
    case AttackKind::Pgd: return "pgd";
    case AttackKind::MiFgsm: return "mi-fgsm";
  }
  return "?";
}

AttackKind parse_attack(const std::string& name) {
  if (name == "fgsm") return AttackKind::Fgsm;
  if (name == "pgd") return AttackKind::Pgd;
  if (name == "mi-fgsm" || name == "mifgsm") return AttackKind::MiFgsm;
  throw std::invalid_argument("unknown attack '" + name + "' (expected fgsm, pgd or mi-fgsm)");
}

Tensor project_linf(const Tensor& x_adv, const Tensor& x_ref, double epsilon) {
  if (x_adv.shape() != x_ref.shape()) throw_shape_error("project_linf", x_adv.shape(), x_ref.shape());
  const float eps = static_cast<float>(epsilon);
  Tensor out = x_adv;
  float* o = out.raw();
  const float* r = x_ref.raw();
  for (std::size_t i = 0; i < out.numel(); ++i) {
    o[i] = std::clamp(std::clamp(o[i], r[i] - eps, r[i] + eps), 0.0f, 1.0f);
  }
  return out;
}

Tensor input_gradient(const Classifier& model, const Tensor& x, std::span<const int> labels, double* loss) {
  check_batch(x, labels);
  Tape tape;
  ForwardContext ctx(tape, Phase::Eval, false);
  Var xv = tape.leaf(x, true);
  Var l = ops::softmax_cross_entropy(model.forward(ctx, xv), labels);
  tape.backward(l);
  if (loss) *loss = l.value()[0];
  return tape.grad(xv);
}

Tensor fgsm(const Classifier& model, const Tensor& x, std::span<const int> labels, const AttackConfig& cfg) {
  cfg.validate();
  if (cfg.epsilon == 0.0) return x;
  const Tensor g = input_gradient(model, x, labels);
  Tensor step = x;
  const float eps = static_cast<float>(cfg.epsilon);
  for (std::size_t i = 0; i < step.numel(); ++i) step[i] += eps * sign(g[i]);
  return project_linf(step, x, cfg.epsilon);
}

Tensor pgd(const Classifier& model, const Tensor& x, std::span<const int> labels, const AttackConfig& cfg,
           Rng* rng, Iterates* iterates) {
  cfg.validate();
  check_batch(x, labels);
  if (cfg.epsilon == 0.0) {
    if (iterates) iterates->assign(static_cast<std::size_t>(cfg.iterations), x);
    return x;
  }
  Tensor cur = x;
  if (cfg.random_start) {
    if (!rng) throw std::invalid_argument("pgd random start needs an rng");
    for (auto& v : cur.data()) v += static_cast<float>(rng->uniform(-cfg.epsilon, cfg.epsilon));
    cur = project_linf(cur, x, cfg.epsilon);
  }
  const float eta = static_cast<float>(cfg.step_size);
  for (int t = 0; t < cfg.iterations; ++t) {
    const Tensor g = input_gradient(model, cur, labels);
    for (std::size_t i = 0; i < cur.numel(); ++i) cur[i] += eta * sign(g[i]);
    cur = project_linf(cur, x, cfg.epsilon);
    if (iterates) iterates->push_back(cur);
  }
  return cur;
}

Tensor mi_fgsm(const Classifier& model, const Tensor& x, std::span<const int> labels, const AttackConfig& cfg,
               Iterates* iterates) {
  cfg.validate();
  check_batch(x, labels);
  if (cfg.epsilon == 0.0) {
    if (iterates) iterates->assign(static_cast<std::size_t>(cfg.iterations), x);
    return x;
  }
  const std::size_t n = x.dim(0), per = x.numel() / n;
  std::vector<double> acc(x.numel(), 0.0);
  Tensor cur = x;
  const float eta = static_cast<float>(cfg.step_size);
  for (int t = 0; t < cfg.iterations; ++t) {
    const Tensor g = input_gradient(model, cur, labels);
    for (std::size_t e = 0; e < n; ++e) {
      const float* ge = g.raw() + e * per;
      double l1 = 0.0;
      for (std::size_t i = 0; i < per; ++i) l1 += std::abs(static_cast<double>(ge[i]));
      l1 /= static_cast<double>(per);
      double* ae = acc.data() + e * per;
      for (std::size_t i = 0; i < per; ++i) {
        ae[i] = cfg.momentum * ae[i] + (l1 > 0.0 ? ge[i] / l1 : 0.0);
      }
    }
    for (std::size_t i = 0; i < cur.numel(); ++i) cur[i] += eta * sign(acc[i]);
    cur = project_linf(cur, x, cfg.epsilon);
    if (iterates) iterates->push_back(cur);
  }
  return cur;
}

Tensor run_attack(AttackKind kind, const Classifier& model, const Tensor& x, std::span<const int> labels,
                  const AttackConfig& cfg, Rng* rng) {
  switch (kind) {
    case AttackKind::Fgsm: return fgsm(model, x, labels, cfg);
    case AttackKind::Pgd: return pgd(model, x, labels, cfg, rng);
    case AttackKind::MiFgsm: return mi_fgsm(model, x, labels, cfg);
  }
  throw std::logic_error("unhandled attack kind");
}

}  // namespace robnas::adv
