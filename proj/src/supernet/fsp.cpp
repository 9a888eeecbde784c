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

namespace robnas::net {

namespace {

// Gramian of example n of batched maps, accumulated in double.
std::vector<double> gram(const Tensor& fin, const Tensor& fout, std::size_t n) {
  const std::size_t ci = fin.dim(1), co = fout.dim(1), p = fin.dim(2) * fin.dim(3);
  std::vector<double> g(ci * co, 0.0);
  const float* a = fin.raw() + n * ci * p;
  const float* b = fout.raw() + n * co * p;
  for (std::size_t i = 0; i < ci; ++i)
    for (std::size_t j = 0; j < co; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < p; ++t) s += static_cast<double>(a[i * p + t]) * b[j * p + t];
      g[i * co + j] = s / static_cast<double>(p);
    }
  return g;
}

void check_pair(const Tensor& fin, const Tensor& fout, std::size_t rank) {
  if (fin.rank() != rank || fout.rank() != rank) throw_shape_error("fsp_matrix", fin.shape(), fout.shape());
  const std::size_t off = rank - 2;
  if (fin.dim(off) != fout.dim(off) || fin.dim(off + 1) != fout.dim(off + 1)) {
    throw_shape_error("fsp_matrix", fin.shape(), fout.shape());
  }
  if (rank == 4 && fin.dim(0) != fout.dim(0)) throw_shape_error("fsp_matrix", fin.shape(), fout.shape());
}

}  // namespace

Tensor fsp_matrix(const Tensor& f_in, const Tensor& f_out) {
  check_pair(f_in, f_out, 3);
  Tensor a = f_in, b = f_out;
  a.reshape({1, f_in.dim(0), f_in.dim(1), f_in.dim(2)});
  b.reshape({1, f_out.dim(0), f_out.dim(1), f_out.dim(2)});
  const auto g = gram(a, b, 0);
  Tensor out({f_in.dim(0), f_out.dim(0)});
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = static_cast<float>(g[i]);
  return out;
}

FeatureTrace trace_features(const Classifier& model, const Tensor& images) {
  Tape tape;
  ForwardContext ctx(tape, Phase::Eval, false);
  FeatureTrace trace;
  ctx.trace = &trace;
  model.forward(ctx, tape.constant(images));
  return trace;
}

std::vector<double> fsp_distance(const Classifier& model, const Tensor& clean,
                                 const Tensor& adversarial) {
  if (clean.shape() != adversarial.shape()) {
    throw_shape_error("fsp_distance", clean.shape(), adversarial.shape());
  }
  const FeatureTrace tc = trace_features(model, clean);
  const FeatureTrace ta = trace_features(model, adversarial);
  const std::size_t batch = clean.dim(0);
  std::vector<double> out(tc.cell_in.size(), 0.0);
  for (std::size_t l = 0; l < out.size(); ++l) {
    check_pair(tc.cell_in[l], tc.cell_out[l], 4);
    double total = 0.0;
    for (std::size_t n = 0; n < batch; ++n) {
      const auto gc = gram(tc.cell_in[l], tc.cell_out[l], n);
      const auto ga = gram(ta.cell_in[l], ta.cell_out[l], n);
      double sq = 0.0;
      for (std::size_t i = 0; i < gc.size(); ++i) sq += (gc[i] - ga[i]) * (gc[i] - ga[i]);
      total += sq;
    }
    out[l] = batch ? total / static_cast<double>(batch) : 0.0;
  }
  return out;
}

void save_feature_trace(const std::filesystem::path& path, const FeatureTrace& trace) {
  std::vector<NamedTensor> records;
  for (std::size_t l = 0; l < trace.cell_in.size(); ++l) {
    records.push_back({"cell" + std::to_string(l) + "/in", trace.cell_in[l]});
    records.push_back({"cell" + std::to_string(l) + "/out", trace.cell_out[l]});
  }
  save_checkpoint(path, records);
}

}  // namespace robnas::net
