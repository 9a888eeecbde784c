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

#include <filesystem>

#include "doctest.h"
#include "robnas/supernet.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"

using namespace robnas;
using namespace robnas::net;
using arch::ArchParams;
using arch::CellSpace;
using arch::SearchMode;
using testing::desk_macro;
using testing::random_images;

namespace {

Tensor masked_logits(const Supernet& net, const ArchParams& a, const Tensor& x) {
  return predict_logits(MaskedSupernet(net, a), x);
}

// Records F_in = x and F_out = 2x (one channel), so the Gramian is
// 2 * mean(x^2) and the distance is easy to evaluate by hand.
class DoublingProbe : public Classifier {
 public:
  Var forward(ForwardContext& ctx, Var input) const override {
    Tensor out = input.value();
    for (auto& v : out.data()) v *= 2.0f;
    if (ctx.trace) {
      ctx.trace->cell_in.push_back(input.value());
      ctx.trace->cell_out.push_back(out);
    }
    return ops::global_avg_pool(input);
  }
  BasicVar<double> forward(BasicForwardContext<double>&, BasicVar<double>) const override {
    throw std::logic_error("unused");
  }
  std::size_t num_cells() const override { return 1; }
};

}  // namespace

TEST_CASE("logits have shape batch x classes") {
  Rng rng(1);
  const Supernet net(desk_macro(), CellSpace(4), rng);
  const Tensor x = random_images(rng, 4, net.macro());
  const ArchParams ones = ArchParams::filled(net.space(), SearchMode::CellBased, 1, 1);
  CHECK(masked_logits(net, ones, x).shape() == Shape{4, 2});
}

TEST_CASE("construction is deterministic and capacity grows with C0") {
  Rng a(42), b(42);
  const Supernet na(desk_macro(), CellSpace(4), a);
  const Supernet nb(desk_macro(), CellSpace(4), b);
  CHECK(testing::checkpoint_bytes(na.checkpoint()) == testing::checkpoint_bytes(nb.checkpoint()));
  Rng c(42);
  const Supernet wide(desk_macro(2, 16), CellSpace(4), c);
  CHECK(wide.parameter_count() > na.parameter_count());
}

TEST_CASE("default reductions and out-of-range positions") {
  MacroConfig m = desk_macro(6);
  CHECK(m.reduction_positions() == std::vector<std::size_t>{2, 4});
  m.reductions = std::vector<std::size_t>{6};
  Rng rng(0);
  CHECK_THROWS_AS(Supernet(m, CellSpace(4), rng), std::invalid_argument);
  const MacroLayout lay = MacroLayout::from(desk_macro(2), CellSpace(4));
  CHECK(lay.cells[0].reduce_after);
  CHECK(lay.cells[1].node_channels == 16);
  CHECK(lay.cells[1].height == 8);
  CHECK(lay.head_features == 32);
}

TEST_CASE("architecture mismatch is rejected") {
  Rng rng(3);
  const Supernet net(desk_macro(), CellSpace(4), rng);
  const Tensor x = random_images(rng, 2, net.macro());
  CHECK_THROWS_AS(masked_logits(net, ArchParams::filled(CellSpace(3), SearchMode::CellBased, 1, 1), x),
                  arch::ArchError);
  CHECK_THROWS_AS(masked_logits(net, ArchParams::filled(net.space(), SearchMode::CellFree, 3, 1), x),
                  arch::ArchError);
}

TEST_CASE("all-zero architecture ignores the input, identity chain does not") {
  Rng rng(5);
  Supernet net(desk_macro(), CellSpace(4), rng);
  testing::perturb_norms(net.parameters(), rng);
  const Tensor x1 = random_images(rng, 3, net.macro());
  const Tensor x2 = random_images(rng, 3, net.macro());

  const ArchParams zero = ArchParams::filled(net.space(), SearchMode::CellBased, 1, 0);
  CHECK(masked_logits(net, zero, x1) == masked_logits(net, zero, x2));

  ArchParams chain = zero;
  for (std::size_t e = 0; e < net.space().num_edges(); ++e)
    if (net.space().is_direct(e)) chain.cells[0][e][1] = 1;
  CHECK(max_abs_diff(masked_logits(net, chain, x1), masked_logits(net, chain, x2)) > 1e-4);
}

TEST_CASE("masked supernet and extracted network agree") {
  Rng rng(11);
  Supernet net(desk_macro(), CellSpace(4), rng);
  testing::perturb_norms(net.parameters(), rng);
  const Tensor x = random_images(rng, 8, net.macro());
  for (int trial = 0; trial < 10; ++trial) {
    const auto mode = trial % 2 ? SearchMode::CellFree : SearchMode::CellBased;
    const ArchParams a = arch::sample_alpha(rng, net.space(), mode, net.macro().cells);
    const Network sub = extract_subnetwork(net, a);
    CHECK(max_abs_diff(masked_logits(net, a, x), predict_logits(sub, x)) <= 1e-5);
  }
}

TEST_CASE("full extraction copies every tensor") {
  Rng rng(2);
  Supernet net(desk_macro(), CellSpace(4), rng);
  const Network sub = extract_subnetwork(net, ArchParams::filled(net.space(), SearchMode::CellBased, 1, 1));
  CHECK(testing::checkpoint_bytes(sub.checkpoint()) == testing::checkpoint_bytes(net.checkpoint()));
}

TEST_CASE("single conv gene extraction holds exactly the referenced weights") {
  Rng rng(4);
  const Supernet net(desk_macro(), CellSpace(4), rng);
  ArchParams a = ArchParams::filled(net.space(), SearchMode::CellBased, 1, 0);
  a.cells[0][5][0] = 1;
  const Network sub = extract_subnetwork(net, a);

  // Enumerated by hand for 3 input channels, C0 = 8, two cells each followed
  // by a reduction (8 -> 16 -> 32 channels), 2 classes.
  const std::size_t stem = 3 * 9 + 8 * 3 + 2 * 8;
  const std::size_t cell0 = 2 * (8 * 8 + 2 * 8) + (8 * 9 + 8 * 8 + 2 * 8);
  const std::size_t red0 = 16 * 32 + 2 * 16;
  const std::size_t cell1 = 2 * (16 * 16 + 2 * 16) + (16 * 9 + 16 * 16 + 2 * 16);
  const std::size_t red1 = 32 * 64 + 2 * 32;
  const std::size_t head = 2 * 32 + 2;
  CHECK(sub.parameter_count() == stem + cell0 + red0 + cell1 + red1 + head);
  CHECK(sub.parameters().find("cell1/edge5/sep/pw").has_value());
  CHECK_FALSE(sub.parameters().find("cell1/edge4/sep/pw").has_value());
}

TEST_CASE("extracted weights are copies") {
  Rng rng(6);
  Supernet net(desk_macro(), CellSpace(4), rng);
  const std::string before = testing::checkpoint_bytes(net.checkpoint());
  Network sub = extract_subnetwork(net, ArchParams::filled(net.space(), SearchMode::CellBased, 1, 1));
  for (std::size_t i = 0; i < sub.parameters().size(); ++i)
    for (auto& v : sub.parameters().at(i).data()) v += 1.0f;
  CHECK(testing::checkpoint_bytes(net.checkpoint()) == before);
}

TEST_CASE("cell-based architecture broadcasts like identical cell-free cells") {
  Rng rng(8);
  Supernet net(desk_macro(3), CellSpace(4), rng);
  testing::perturb_norms(net.parameters(), rng);
  const Tensor x = random_images(rng, 2, net.macro());
  for (int trial = 0; trial < 5; ++trial) {
    const ArchParams shared = arch::sample_alpha(rng, net.space(), SearchMode::CellBased, 3);
    ArchParams free = shared;
    free.mode = SearchMode::CellFree;
    free.cells.assign(3, shared.cells[0]);
    CHECK(masked_logits(net, shared, x) == masked_logits(net, free, x));
  }
}

TEST_CASE("zeroing a gene in a later cell leaves earlier cells untouched") {
  Rng rng(9);
  Supernet net(desk_macro(3), CellSpace(4), rng);
  const Tensor x = random_images(rng, 2, net.macro());
  ArchParams a = ArchParams::filled(net.space(), SearchMode::CellFree, 3, 1);
  const FeatureTrace full = trace_features(MaskedSupernet(net, a), x);
  a.cells[2][7][0] = 0;
  const FeatureTrace cut = trace_features(MaskedSupernet(net, a), x);
  CHECK(full.cell_out.size() == 3);
  CHECK(full.cell_out[0] == cut.cell_out[0]);
  CHECK(full.cell_out[1] == cut.cell_out[1]);
  CHECK_FALSE(full.cell_out[2] == cut.cell_out[2]);
}

TEST_CASE("input gradient of a 2-cell network matches finite differences") {
  Rng rng(21);
  Supernet net(desk_macro(), CellSpace(4), rng);
  testing::perturb_norms(net.parameters(), rng);
  const ArchParams a = arch::sample_alpha(rng, net.space(), SearchMode::CellBased, 2);
  const Network sub = extract_subnetwork(net, a);
  const std::vector<int> labels{0, 1};
  const Tensor x = random_images(rng, 2, net.macro());
  for (Phase phase : {Phase::Eval, Phase::Train}) {
    auto rep = testing::check_gradients(
        [&](auto& tape, auto& v) {
          using T = typename std::decay_t<decltype(tape)>::TensorT::value_type;
          BasicForwardContext<T> ctx(tape, phase, false);
          return ops::softmax_cross_entropy(sub.forward(ctx, v[0]), labels);
        },
        {x}, rng, 10);
    CHECK(rep.checked == 10);
    CHECK(rep.max_rel_error < 1e-3);
  }
}

TEST_CASE("fsp matrix examples") {
  CHECK(fsp_matrix(Tensor({1, 2, 2}, 1.0f), Tensor({1, 2, 2}, 2.0f)) == Tensor({1, 1}, 2.0f));
  CHECK(fsp_matrix(Tensor({3, 2, 2}, 1.0f), Tensor({2, 2, 2}, 0.0f)) == Tensor({3, 2}, 0.0f));
  CHECK_THROWS_AS(fsp_matrix(Tensor({1, 2, 2}), Tensor({1, 2, 3})), ShapeError);

  Rng rng(12);
  const Tensor a = testing::random_tensor(rng, {2, 3, 3});
  const Tensor b = testing::random_tensor(rng, {4, 3, 3});
  const Tensor g = fsp_matrix(a, b);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double s = 0;
      for (std::size_t h = 0; h < 3; ++h)
        for (std::size_t w = 0; w < 3; ++w) s += double(a[(i * 3 + h) * 3 + w]) * b[(j * 3 + h) * 3 + w];
      CHECK(g[i * 4 + j] == doctest::Approx(s / 9).epsilon(1e-6));
    }

  const Tensor sq = fsp_matrix(b, b);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(sq[i * 4 + j] == sq[j * 4 + i]);
}

TEST_CASE("fsp distance") {
  Rng rng(13);
  Supernet net(desk_macro(), CellSpace(4), rng);
  const MaskedSupernet model(net, ArchParams::filled(net.space(), SearchMode::CellBased, 1, 1));
  const Tensor x = random_images(rng, 3, net.macro());
  const auto same = fsp_distance(model, x, x);
  CHECK(same.size() == 2);
  for (double d : same) CHECK(d == 0.0);
  Tensor y = x;
  y[0] += 0.5f;
  for (double d : fsp_distance(model, x, y)) CHECK(d > 0.0);

  // One 1x2x2 example: G(x) = 2 * mean(x^2).
  const Tensor clean(Shape{1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});  // mean square 7.5, G = 15
  const Tensor adv(Shape{1, 1, 2, 2}, 1.0f);                                 // G = 2
  const auto d = fsp_distance(DoublingProbe{}, clean, adv);
  REQUIRE(d.size() == 1);
  CHECK(d[0] == doctest::Approx(169.0));
}

TEST_CASE("feature trace dump uses per-cell names") {
  Rng rng(14);
  Supernet net(desk_macro(), CellSpace(4), rng);
  const MaskedSupernet model(net, ArchParams::filled(net.space(), SearchMode::CellBased, 1, 1));
  const FeatureTrace t = trace_features(model, random_images(rng, 1, net.macro()));
  CHECK(t.cell_in[0].shape() == Shape{1, 8, 16, 16});
  CHECK(t.cell_out[0].shape() == Shape{1, 32, 16, 16});
  CHECK(t.cell_in[1].shape() == Shape{1, 16, 8, 8});
  const auto path = std::filesystem::temp_directory_path() / "robnas_trace_test.rbnt";
  save_feature_trace(path, t);
  const auto back = load_checkpoint(path);
  std::filesystem::remove(path);
  REQUIRE(back.size() == 4);
  CHECK(back[0].name == "cell0/in");
  CHECK(back[3].name == "cell1/out");
  CHECK(back[3].tensor == t.cell_out[1]);
}
