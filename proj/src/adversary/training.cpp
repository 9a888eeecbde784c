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
#include <memory>
#include <numeric>

#include "robnas/adversary.hpp"
#include "robnas/text.hpp"

namespace robnas::adv {

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
  for (std::size_t i = 0; i < lr_decay_epochs.size(); ++i) {
    if (lr_decay_epochs[i] < 0 || lr_decay_epochs[i] >= std::max(epochs, 1) ||
        (i > 0 && lr_decay_epochs[i] <= lr_decay_epochs[i - 1])) {
      throw std::invalid_argument("lr_decay_epochs must be strictly increasing and below epochs");
    }
  }
  attack.validate();
}

double TrainConfig::lr_at(int epoch) const {
  double v = lr;
  for (int e : lr_decay_epochs)
    if (epoch >= e) v *= lr_decay_factor;
  return v;
}

void Sgd::step(ParameterSet& ps, const ForwardContext& ctx, double lr) {
  if (velocity_.size() < ps.size()) velocity_.resize(ps.size());
  std::vector<Tensor> grads(ps.size());
  for (const auto& [param, var] : ctx.bound) {
    if (!ctx.tape.has_grad(var)) continue;
    Tensor* p = ps.mutable_from(param);
    if (!p) throw std::logic_error("gradient for a parameter outside the optimised set");
    const auto slot = static_cast<std::size_t>(p - &ps.at(0));
    Tensor g = ctx.tape.grad(var);
    if (grads[slot].numel() == 0) {
      grads[slot] = std::move(g);
    } else {
      for (std::size_t i = 0; i < g.numel(); ++i) grads[slot][i] += g[i];
    }
  }
  const float mu = static_cast<float>(momentum_), rate = static_cast<float>(lr);
  for (std::size_t s = 0; s < ps.size(); ++s) {
    if (grads[s].numel() == 0) continue;
    Tensor& v = velocity_[s];
    if (v.numel() == 0) {
      v = grads[s];
    } else {
      for (std::size_t i = 0; i < v.numel(); ++i) v[i] = mu * v[i] + grads[s][i];
    }
    float* w = ps.at(s).raw();
    for (std::size_t i = 0; i < v.numel(); ++i) w[i] -= rate * v[i];
  }
}

std::string epoch_csv_header() { return "epoch,clean_acc,robust_acc,loss"; }

std::string epoch_csv_row(const EpochMetrics& m) {
  return std::to_string(m.epoch) + "," + format_number(m.clean_acc) + "," + format_number(m.robust_acc) + "," +
         format_number(m.loss);
}

double adversarial_step(const Classifier& model, ParameterSet& ps, Sgd& opt, const Tensor& x,
                        std::span<const int> labels, const AttackConfig& attack, double lr, Rng* rng,
                        std::size_t* correct) {
  const Tensor x_adv = pgd(model, x, labels, attack, rng);
  if (correct) {
    const auto pred = predict_labels(model, x);
    for (std::size_t i = 0; i < labels.size(); ++i) correct[0] += pred[i] == labels[i];
  }
  Tape tape;
  ForwardContext ctx(tape, Phase::Train, true);
  Var logits = model.forward(ctx, tape.constant(x_adv));
  Var loss = ops::softmax_cross_entropy(logits, labels);
  const double value = loss.value()[0];
  if (!std::isfinite(value)) {
    throw TrainingError("non-finite loss " + format_number(value) + " at lr " + format_number(lr));
  }
  tape.backward(loss);
  opt.step(ps, ctx, lr);
  commit_norm_updates(ps, ctx);
  if (correct) {
    const auto pred = argmax_rows(logits.value());
    for (std::size_t i = 0; i < labels.size(); ++i) correct[1] += pred[i] == labels[i];
  }
  return value;
}

namespace {

// Shared epoch/batch loop. `pick` returns the classifier for the next batch
// and a description of it for diagnostics.
template <class Pick>
TrainHistory train_loop(ParameterSet& ps, const Dataset& data, const TrainConfig& cfg, Rng& rng, Pick&& pick) {
  cfg.validate();
  if (data.size() == 0) throw TrainingError("empty training set");
  TrainHistory hist;
  Sgd opt(cfg.momentum);
  std::vector<std::size_t> order(data.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));
    const double lr = cfg.lr_at(epoch);
    double loss_sum = 0.0;
    std::size_t correct[2] = {0, 0};
    std::size_t batch = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(cfg.batch_size, order.size() - start));
      const Tensor x = data.gather_images(idx);
      const std::vector<int> y = data.gather_labels(idx);
      auto [model, describe] = pick();
      double loss;
      try {
        loss = adversarial_step(*model, ps, opt, x, y, cfg.attack, lr, &rng, correct);
      } catch (const TrainingError& e) {
        throw TrainingError("training aborted at epoch " + std::to_string(epoch) + " batch " +
                            std::to_string(batch) + " (" + describe() + "): " + e.what());
      }
      hist.batch_losses.push_back(loss);
      loss_sum += loss * static_cast<double>(idx.size());
    }
    const auto n = static_cast<double>(data.size());
    hist.epochs.push_back({epoch, correct[0] / n, correct[1] / n, loss_sum / n});
  }
  return hist;
}

}  // namespace

TrainHistory robust_search_train(net::Supernet& net, const Dataset& data, const TrainConfig& cfg, Rng& rng,
                                 arch::SearchMode mode) {
  std::unique_ptr<net::MaskedSupernet> current;
  return train_loop(net.parameters(), data, cfg, rng, [&] {
    current = std::make_unique<net::MaskedSupernet>(
        net, arch::sample_alpha(rng, net.space(), mode, net.macro().cells));
    const net::MaskedSupernet* m = current.get();
    return std::pair{m, std::function<std::string()>([m] { return "alpha " + arch::to_genotype_json(m->alpha()); })};
  });
}

TrainHistory adversarial_train(const Classifier& model, ParameterSet& ps, const Dataset& data,
                               const TrainConfig& cfg, Rng& rng) {
  return train_loop(ps, data, cfg, rng, [&] {
    return std::pair{&model, std::function<std::string()>([] { return std::string("fixed architecture"); })};
  });
}

EvalResult evaluate(const Classifier& model, const Dataset& data, AttackKind kind, const AttackConfig& attack,
                    std::size_t batch_size, Rng* rng) {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  EvalResult r;
  r.total = data.size();
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    idx.resize(std::min(batch_size, data.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const Tensor x = data.gather_images(idx);
    const std::vector<int> y = data.gather_labels(idx);
    const auto clean = predict_labels(model, x);
    const auto adv = predict_labels(model, run_attack(kind, model, x, y, attack, rng));
    for (std::size_t i = 0; i < y.size(); ++i) {
      r.clean_correct += clean[i] == y[i];
      r.robust_correct += adv[i] == y[i];
    }
    r.pred_clean.insert(r.pred_clean.end(), clean.begin(), clean.end());
    r.pred_adv.insert(r.pred_adv.end(), adv.begin(), adv.end());
  }
  return r;
}

FinetuneResult adversarial_finetune(net::Network& network, const Dataset& train, const Dataset& val,
                                    const TrainConfig& cfg, const AttackConfig& eval_attack, Rng& rng, int epochs) {
  if (epochs < 0) throw std::invalid_argument("finetune epochs must be non-negative");
  FinetuneResult out;
  out.before = evaluate(network, val, AttackKind::Pgd, eval_attack, 256, &rng);
  if (epochs == 0) {
    out.after = out.before;
    return out;
  }
  TrainConfig tc = cfg;
  tc.epochs = epochs;
  tc.lr_decay_epochs.erase(std::remove_if(tc.lr_decay_epochs.begin(), tc.lr_decay_epochs.end(),
                                          [&](int e) { return e >= epochs; }),
                           tc.lr_decay_epochs.end());
  out.history = adversarial_train(network, network.parameters(), train, tc, rng);
  out.after = evaluate(network, val, AttackKind::Pgd, eval_attack, 256, &rng);
  return out;
}

namespace {

net::Network train_from_scratch(const arch::ArchParams& alpha, const net::MacroConfig& macro,
                                const arch::CellSpace& space, const Dataset& train, const TrainConfig& cfg,
                                std::uint64_t seed) {
  Rng init(derive_seed(seed, Stage::Transfer, 0));
  const net::Supernet bank(macro, space, init);
  net::Network n = net::extract_subnetwork(bank, alpha);
  Rng order(derive_seed(seed, Stage::Transfer, 1));
  adversarial_train(n, n.parameters(), train, cfg, order);
  return n;
}

}  // namespace

TransferResult blackbox_transfer_eval(const arch::ArchParams& alpha, const net::MacroConfig& macro,
                                      const arch::CellSpace& space, const Dataset& train, const Dataset& test,
                                      const TrainConfig& train_cfg, const AttackConfig& attack,
                                      std::uint64_t target_seed, std::uint64_t copy_seed) {
  const net::Network target = train_from_scratch(alpha, macro, space, train, train_cfg, target_seed);
  const net::Network copy = copy_seed == target_seed
                                ? target
                                : train_from_scratch(alpha, macro, space, train, train_cfg, copy_seed);
  Rng noise(derive_seed(target_seed, Stage::Transfer, 2));
  const EvalResult white = evaluate(target, test, AttackKind::Pgd, attack, 256, &noise);

  std::size_t hits = 0;
  std::vector<std::size_t> idx;
  Rng copy_noise(derive_seed(target_seed, Stage::Transfer, 2));
  for (std::size_t start = 0; start < test.size(); start += 256) {
    idx.resize(std::min<std::size_t>(256, test.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const Tensor x = test.gather_images(idx);
    const std::vector<int> y = test.gather_labels(idx);
    const auto pred = predict_labels(target, pgd(copy, x, y, attack, &copy_noise));
    for (std::size_t i = 0; i < y.size(); ++i) hits += pred[i] == y[i];
  }
  const auto n = static_cast<double>(test.size());
  return {white.clean_acc(), white.robust_acc(), static_cast<double>(hits) / n};
}

}  // namespace robnas::adv
