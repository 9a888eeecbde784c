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

#include <cmath>

#include "doctest.h"
#include "robnas/adversary.hpp"
#include "support/fixtures.hpp"
#include "support/plain_sgd.hpp"
#include "support/toy_models.hpp"

using namespace robnas;
using namespace robnas::adv;
using arch::ArchParams;
using arch::CellSpace;
using arch::SearchMode;

namespace {

Tensor scalar_image(float v) { return Tensor(Shape{1, 1, 1, 1}, v); }

double linf(const Tensor& a, const Tensor& b) { return max_abs_diff(a, b); }

bool in_unit_box(const Tensor& t) {
  for (float v : t.data())
    if (v < 0.0f || v > 1.0f) return false;
  return true;
}

Dataset tiny_data(std::uint64_t seed, std::size_t n, std::size_t size = 8) {
  Rng rng(seed);
  SynthConfig sc;
  sc.n = n;
  sc.size = size;
  return synth_dataset(rng, sc);
}

net::MacroConfig tiny_macro() {
  net::MacroConfig m = testing::desk_macro(2, 4);
  m.height = m.width = 8;
  return m;
}

}  // namespace

TEST_CASE("linf projection examples") {
  const Tensor x = scalar_image(0.5f);
  CHECK(project_linf(x, x, 0.1) == x);
  CHECK(project_linf(scalar_image(0.9f), x, 0.1)[0] == doctest::Approx(0.6));
  CHECK(project_linf(scalar_image(-0.5f), scalar_image(0.01f), 0.1)[0] == 0.0f);
  CHECK_THROWS_AS(project_linf(Tensor({2}), Tensor({3}), 0.1), ShapeError);
}

TEST_CASE("attack config validation and names") {
  AttackConfig c;
  CHECK_NOTHROW(c.validate());
  c.iterations = 0;
  CHECK_THROWS(c.validate());
  c = AttackConfig{};
  c.epsilon = -0.1;
  CHECK_THROWS(c.validate());
  c = AttackConfig{};
  c.step_size = 0;
  CHECK_THROWS(c.validate());
  const AttackConfig paper{8.0 / 255, 2.0 / 255, 7, false, 1.0};
  CHECK_NOTHROW(paper.validate());
  for (auto k : {AttackKind::Fgsm, AttackKind::Pgd, AttackKind::MiFgsm}) CHECK(parse_attack(attack_name(k)) == k);
  CHECK_THROWS(parse_attack("deepfool"));
}

TEST_CASE("fgsm on a logistic model moves against the weight sign") {
  AttackConfig cfg;
  cfg.epsilon = 0.05;
  const std::vector<int> positive{1};
  Rng rng(3);
  for (double w : {2.0, -3.0}) {
    const testing::LogisticToy model(w, 0.1);
    Tensor x(Shape{1, 1, 2, 2});
    for (auto& v : x.data()) v = static_cast<float>(rng.uniform(0.2, 0.8));
    // dL/dx_i = -sigmoid(-(w m + b)) * w / 4, so sign = -sign(w).
    const Tensor adv = fgsm(model, x, positive, cfg);
    for (std::size_t i = 0; i < 4; ++i) {
      const float expected = x[i] - static_cast<float>(cfg.epsilon) * (w > 0 ? 1.0f : -1.0f);
      CHECK(adv[i] == expected);
    }
    double before = 0, after = 0;
    input_gradient(model, x, positive, &before);
    input_gradient(model, adv, positive, &after);
    CHECK(after > before);
  }
}

TEST_CASE("pgd follows a hand-stepped trajectory on a quadratic toy") {
  // Class 0 loss grows as the mean pixel approaches c = 0.5 from either side.
  const testing::QuadraticToy model(4.0, 0.5);
  AttackConfig cfg;
  cfg.epsilon = 0.2;
  cfg.step_size = 0.03;
  cfg.iterations = 3;
  const std::vector<int> label{0};
  const Tensor x = scalar_image(0.46f);
  Iterates its;
  pgd(model, x, label, cfg, nullptr, &its);
  REQUIRE(its.size() == 3);
  // 0.46 -> 0.49 (below c, step up) -> 0.52 (still below, step up) -> 0.49
  // (now above c, step down).
  float hand = 0.46f;
  const float eta = static_cast<float>(cfg.step_size);
  for (int t = 0; t < 3; ++t) {
    hand += hand < 0.5f ? eta : -eta;
    CHECK(its[static_cast<std::size_t>(t)][0] == hand);
  }
  CHECK(its[2][0] == doctest::Approx(0.49));
}

TEST_CASE("mi-fgsm momentum recursion on the quadratic toy") {
  const testing::QuadraticToy model(4.0, 0.5);
  AttackConfig cfg;
  cfg.epsilon = 0.2;
  cfg.step_size = 0.06;
  cfg.iterations = 2;
  cfg.momentum = 1.0;
  const std::vector<int> label{0};
  const Tensor x = scalar_image(0.47f);
  Iterates its;
  mi_fgsm(model, x, label, cfg, &its);
  REQUIRE(its.size() == 2);
  // Step 1: g1 = grad/|grad| = +1 -> 0.53. Step 2: the raw gradient flips,
  // g2 = 1 * g1 - 1 = 0, so sign(g2) = 0 and the iterate stays.
  CHECK(its[0][0] == 0.47f + 0.06f);
  CHECK(its[1][0] == its[0][0]);
  Iterates pgd_its;
  pgd(model, x, label, cfg, nullptr, &pgd_its);
  CHECK(pgd_its[1][0] == doctest::Approx(0.47));

  cfg.momentum = 2.0;  // g2 = 2 - 1 = 1 keeps pushing up.
  its.clear();
  mi_fgsm(model, x, label, cfg, &its);
  CHECK(its[1][0] == doctest::Approx(0.59));
}

TEST_CASE("attacks respect the budget and epsilon zero is the identity") {
  Rng rng(17);
  const net::MacroConfig macro = tiny_macro();
  net::Supernet bank(macro, CellSpace(4), rng);
  testing::perturb_norms(bank.parameters(), rng);
  const net::Network model = net::extract_subnetwork(bank, arch::sample_alpha(rng, bank.space(), SearchMode::CellBased, 2));
  const Tensor x = testing::random_images(rng, 6, macro);
  const std::vector<int> y{0, 1, 0, 1, 1, 0};
  for (double eps : {0.0, 2.0 / 255, 8.0 / 255}) {
    AttackConfig cfg;
    cfg.epsilon = eps;
    for (auto kind : {AttackKind::Fgsm, AttackKind::Pgd, AttackKind::MiFgsm}) {
      for (bool rs : {false, true}) {
        cfg.random_start = rs;
        const Tensor adv = run_attack(kind, model, x, y, cfg, &rng);
        CHECK(linf(adv, x) <= eps + 1e-6);
        CHECK(in_unit_box(adv));
        if (eps == 0.0) CHECK(adv == x);
      }
    }
  }
}

TEST_CASE("mi-fgsm without momentum reproduces pgd iterates exactly") {
  Rng rng(23);
  const net::MacroConfig macro = tiny_macro();
  net::Supernet bank(macro, CellSpace(4), rng);
  const net::MaskedSupernet model(bank, arch::sample_alpha(rng, bank.space(), SearchMode::CellBased, 2));
  const Tensor x = testing::random_images(rng, 4, macro);
  const std::vector<int> y{1, 0, 0, 1};
  AttackConfig cfg;
  cfg.iterations = 10;
  cfg.momentum = 0.0;
  Iterates a, b;
  pgd(model, x, y, cfg, nullptr, &a);
  mi_fgsm(model, x, y, cfg, &b);
  REQUIRE(a.size() == 10);
  for (std::size_t t = 0; t < a.size(); ++t) CHECK(a[t] == b[t]);
}

TEST_CASE("sgd momentum update by hand") {
  ParameterSet ps;
  ps.add("w", Tensor(Shape{1}, 1.0f));
  ps.add("unused", Tensor(Shape{1}, 5.0f));
  Sgd opt(0.9);
  for (int step = 0; step < 2; ++step) {
    Tape tape;
    ForwardContext ctx(tape, Phase::Train, true);
    Var w = ctx.bind(ps.at(0));
    tape.backward(ops::sum(ops::mul(w, w)));  // grad 2w
    opt.step(ps, ctx, 0.1);
  }
  // v1 = 2, w1 = 0.8; v2 = 0.9 * 2 + 1.6 = 3.4, w2 = 0.8 - 0.34 = 0.46.
  CHECK(ps.at(0)[0] == doctest::Approx(0.46));
  CHECK(ps.at(1)[0] == 5.0f);
}

TEST_CASE("learning-rate schedule and config checks") {
  TrainConfig tc;
  tc.epochs = 200;
  tc.lr = 0.1;
  tc.lr_decay_epochs = {100, 150};
  CHECK_NOTHROW(tc.validate());
  CHECK(tc.lr_at(99) == doctest::Approx(0.1));
  CHECK(tc.lr_at(100) == doctest::Approx(0.01));
  CHECK(tc.lr_at(199) == doctest::Approx(0.001));
  tc.lr_decay_epochs = {150, 100};
  CHECK_THROWS(tc.validate());
  tc.lr_decay_epochs = {200};
  CHECK_THROWS(tc.validate());
}

TEST_CASE("robust search with zero epsilon equals plain SGD") {
  const Dataset data = tiny_data(5, 80);
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 8;
  tc.lr = 0.05;
  tc.attack.epsilon = 0.0;
  Rng ia(1), ib(1);
  net::Supernet a(tiny_macro(), CellSpace(4), ia);
  net::Supernet b(tiny_macro(), CellSpace(4), ib);
  Rng ra(9), rb(9);
  const TrainHistory h = robust_search_train(a, data, tc, ra);
  testing::plain_sgd_search(b, data, tc, rb);
  CHECK(h.batch_losses.size() == 10);
  const auto ca = a.checkpoint(), cb = b.checkpoint();
  double worst = 0;
  for (std::size_t i = 0; i < ca.size(); ++i) worst = std::max(worst, max_abs_diff(ca[i].tensor, cb[i].tensor));
  CHECK(worst <= 1e-7);
}

TEST_CASE("robust search is deterministic and records history") {
  const Dataset data = tiny_data(6, 48);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 16;
  tc.attack.iterations = 2;
  std::string bytes[2];
  for (int run = 0; run < 2; ++run) {
    Rng init(3), train(4);
    net::Supernet net(tiny_macro(), CellSpace(4), init);
    const TrainHistory h = robust_search_train(net, data, tc, train);
    CHECK(h.epochs.size() == 2);
    CHECK(h.batch_losses.size() == 6);
    CHECK(h.epochs[1].clean_acc >= 0.0);
    CHECK(h.epochs[1].robust_acc <= 1.0);
    bytes[run] = testing::checkpoint_bytes(net.checkpoint());
  }
  CHECK(bytes[0] == bytes[1]);
  CHECK(epoch_csv_header() == "epoch,clean_acc,robust_acc,loss");
  CHECK(epoch_csv_row({2, 0.5, 0.25, 1.5}) == "2,0.5,0.25,1.5");
}

TEST_CASE("non-finite loss aborts with batch, architecture and rate") {
  const Dataset data = tiny_data(7, 16);
  Rng init(1), train(2);
  net::Supernet net(tiny_macro(), CellSpace(4), init);
  for (auto& v : net.parameters().at(*net.parameters().find("head/bias")).data()) v = NAN;
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 8;
  tc.attack.iterations = 1;
  try {
    robust_search_train(net, data, tc, train);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("batch 0") != std::string::npos);
    CHECK(msg.find("alpha {") != std::string::npos);
    CHECK(msg.find("lr 0.05") != std::string::npos);
  }
}

TEST_CASE("finetune with zero epochs only evaluates") {
  const Dataset data = tiny_data(8, 32);
  Rng init(2), rng(3);
  net::Supernet bank(tiny_macro(), CellSpace(4), init);
  net::Network sub = net::extract_subnetwork(bank, arch::sample_alpha(rng, bank.space(), SearchMode::CellBased, 2));
  const std::string before = testing::checkpoint_bytes(sub.checkpoint());
  const FinetuneResult r = adversarial_finetune(sub, data, data, TrainConfig{}, AttackConfig{}, rng, 0);
  CHECK(testing::checkpoint_bytes(sub.checkpoint()) == before);
  CHECK(r.after.robust_correct == r.before.robust_correct);
  CHECK(r.history.epochs.empty());
  CHECK(kDefaultFinetuneEpochs == 3);

  const FinetuneResult trained = adversarial_finetune(sub, data, data, TrainConfig{}, AttackConfig{}, rng, 1);
  CHECK(trained.history.epochs.size() == 1);
  CHECK(testing::checkpoint_bytes(sub.checkpoint()) != before);
}

TEST_CASE("evaluation with zero epsilon has robust accuracy equal to clean") {
  const Dataset data = tiny_data(9, 40);
  Rng init(2);
  net::Supernet bank(tiny_macro(), CellSpace(4), init);
  const net::MaskedSupernet model(bank, ArchParams::filled(bank.space(), SearchMode::CellBased, 1, 1));
  AttackConfig cfg;
  cfg.epsilon = 0.0;
  for (auto kind : {AttackKind::Fgsm, AttackKind::Pgd, AttackKind::MiFgsm}) {
    const EvalResult r = evaluate(model, data, kind, cfg, 16);
    CHECK(r.total == 40);
    CHECK(r.robust_correct == r.clean_correct);
    CHECK(r.pred_adv == r.pred_clean);
  }
}

TEST_CASE("transfer attack degenerate cases") {
  const Dataset train = tiny_data(10, 32);
  const Dataset test = tiny_data(11, 24);
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 16;
  tc.attack.iterations = 2;
  AttackConfig atk;
  atk.iterations = 3;
  Rng rng(12);
  const ArchParams a = arch::sample_alpha(rng, CellSpace(4), SearchMode::CellBased, 2);
  const TransferResult self = blackbox_transfer_eval(a, tiny_macro(), CellSpace(4), train, test, tc, atk, 5, 5);
  CHECK(self.transfer_acc == self.whitebox_acc);
  atk.epsilon = 0.0;
  const TransferResult none = blackbox_transfer_eval(a, tiny_macro(), CellSpace(4), train, test, tc, atk, 5, 6);
  CHECK(none.transfer_acc == none.clean_acc);
}
