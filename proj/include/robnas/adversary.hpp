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

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "robnas/arch.hpp"
#include "robnas/data.hpp"
#include "robnas/model.hpp"
#include "robnas/supernet.hpp"

namespace robnas::adv {

/// l-infinity attack budget. Pixel units, so 8/255 is the usual CIFAR radius.
struct AttackConfig {
  double epsilon = 8.0 / 255.0;
  double step_size = 2.0 / 255.0;
  int iterations = 7;
  bool random_start = false;
  /// MI-FGSM decay.
  double momentum = 1.0;

  void validate() const;
};

enum class AttackKind { Fgsm, Pgd, MiFgsm };
std::string attack_name(AttackKind k);
AttackKind parse_attack(const std::string& name);

/// Clamp into [x_ref - eps, x_ref + eps], then into [0, 1].
Tensor project_linf(const Tensor& x_adv, const Tensor& x_ref, double epsilon);

/// Gradient of the mean cross-entropy w.r.t. the input, eval mode.
Tensor input_gradient(const Classifier& model, const Tensor& x, std::span<const int> labels,
                      double* loss = nullptr);

/// Optional per-iteration record of the adversarial iterates x^(1..T).
using Iterates = std::vector<Tensor>;

Tensor fgsm(const Classifier& model, const Tensor& x, std::span<const int> labels, const AttackConfig& cfg);
/// `rng` is only drawn from when cfg.random_start is set.
Tensor pgd(const Classifier& model, const Tensor& x, std::span<const int> labels, const AttackConfig& cfg,
           Rng* rng = nullptr, Iterates* iterates = nullptr);
/// g <- mu * g + grad / mean|grad| per example; x <- proj(x + eta * sign(g)).
Tensor mi_fgsm(const Classifier& model, const Tensor& x, std::span<const int> labels,
               const AttackConfig& cfg, Iterates* iterates = nullptr);
Tensor run_attack(AttackKind kind, const Classifier& model, const Tensor& x, std::span<const int> labels,
                  const AttackConfig& cfg, Rng* rng = nullptr);

struct TrainConfig {
  int epochs = 5;
  double lr = 0.05;
  std::vector<int> lr_decay_epochs;
  double lr_decay_factor = 0.1;
  double momentum = 0.9;
  std::size_t batch_size = 64;
  AttackConfig attack;

  void validate() const;
  double lr_at(int epoch) const;
};

/// SGD with heavy-ball momentum, v <- mu * v + g, p <- p - lr * v. A
/// parameter that received no gradient in a step is left alone, momentum
/// included.
class Sgd {
 public:
  explicit Sgd(double momentum) : momentum_(momentum) {}
  void step(ParameterSet& ps, const ForwardContext& ctx, double lr);

 private:
  double momentum_;
  std::vector<Tensor> velocity_;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochMetrics {
  int epoch;
  /// Running accuracies over the epoch's training batches.
  double clean_acc;
  double robust_acc;
  double loss;
};

std::string epoch_csv_header();
std::string epoch_csv_row(const EpochMetrics& m);

struct TrainHistory {
  std::vector<EpochMetrics> epochs;
  std::vector<double> batch_losses;
};

/// One adversarial step: attack `model` in eval mode, train-mode forward on
/// the result, SGD update of `ps`, running statistics committed. Returns the
/// adversarial loss; `correct` receives [clean hits, robust hits].
double adversarial_step(const Classifier& model, ParameterSet& ps, Sgd& opt, const Tensor& x,
                        std::span<const int> labels, const AttackConfig& attack, double lr,
                        Rng* rng = nullptr, std::size_t* correct = nullptr);

/// Path-dropout robust training of the supernet: every batch samples a fresh
/// architecture, attacks that sub-network with PGD and updates the shared
/// bank through it. Randomness per epoch: one shuffle, then per batch one
/// architecture draw (and PGD random starts when enabled), all from `rng`.
TrainHistory robust_search_train(net::Supernet& net, const Dataset& data, const TrainConfig& cfg, Rng& rng,
                                 arch::SearchMode mode = arch::SearchMode::CellBased);

/// Adversarial training of any classifier whose weights live in `ps`, with
/// the same batching scheme minus the architecture draw.
TrainHistory adversarial_train(const Classifier& model, ParameterSet& ps, const Dataset& data,
                               const TrainConfig& cfg, Rng& rng);

struct EvalResult {
  std::size_t total = 0;
  std::size_t clean_correct = 0;
  std::size_t robust_correct = 0;
  std::vector<int> pred_clean;
  std::vector<int> pred_adv;

  double clean_acc() const { return total ? static_cast<double>(clean_correct) / total : 0.0; }
  double robust_acc() const { return total ? static_cast<double>(robust_correct) / total : 0.0; }
};

/// Clean and attacked predictions over a dataset in fixed-order batches.
EvalResult evaluate(const Classifier& model, const Dataset& data, AttackKind kind, const AttackConfig& attack,
                    std::size_t batch_size = 256, Rng* rng = nullptr);

struct FinetuneResult {
  EvalResult before;
  EvalResult after;
  TrainHistory history;
};

inline constexpr int kDefaultFinetuneEpochs = 3;

/// Evaluates, adversarially trains for `epochs` (cfg.epochs is ignored), and
/// evaluates again under PGD with `eval_attack`. epochs == 0 leaves the
/// weights untouched and `after` equals `before`.
FinetuneResult adversarial_finetune(net::Network& network, const Dataset& train, const Dataset& val,
                                    const TrainConfig& cfg, const AttackConfig& eval_attack, Rng& rng,
                                    int epochs = kDefaultFinetuneEpochs);

struct TransferResult {
  double clean_acc;
  double whitebox_acc;
  double transfer_acc;
};

/// Trains the target and an independent copy of the same architecture from
/// scratch (seeds differ only in their init and batch order), crafts PGD
/// examples on the copy and scores the target on them.
TransferResult blackbox_transfer_eval(const arch::ArchParams& alpha, const net::MacroConfig& macro,
                                      const arch::CellSpace& space, const Dataset& train, const Dataset& test,
                                      const TrainConfig& train_cfg, const AttackConfig& attack,
                                      std::uint64_t target_seed, std::uint64_t copy_seed);

}  // namespace robnas::adv
