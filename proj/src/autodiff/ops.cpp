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

#include "robnas/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace robnas::ops {

namespace {

template <class T>
bool needs(BasicVar<T> v) {
  return v.tape->requires_grad(v);
}

template <class T>
void require_rank(const char* op, BasicVar<T> v, std::size_t rank) {
  if (v.shape().size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(v.shape()));
  }
}

template <class T>
void require_same_tape(const char* op, BasicVar<T> a, BasicVar<T> b) {
  if (a.tape != b.tape) throw std::invalid_argument(std::string(op) + ": operands on different tapes");
}

// Kernels below work on blocks of kLanes contiguous values so that the inner
// loops have a fixed trip count and vectorise, while every reduction keeps a
// fixed summation order.
constexpr std::size_t kLanes = 16;

template <class T>
inline void lane_fma(T* acc, const T* a, const T* b, std::size_t len) {
  if (len == kLanes) {
    for (std::size_t j = 0; j < kLanes; ++j) acc[j] += a[j] * b[j];
  } else {
    for (std::size_t j = 0; j < len; ++j) acc[j] += a[j] * b[j];
  }
}

template <class T>
inline T lane_sum(const T* acc) {
  T s = 0;
  for (std::size_t j = 0; j < kLanes; ++j) s += acc[j];
  return s;
}

// dst[p] += sum_i w[i * si] * in[i][p] over one block of L values.
template <class T, std::size_t L>
inline void mix_block(const T* in, std::size_t nin, const T* w, std::size_t si, std::size_t P, T* dst) {
  T acc[L];
  for (std::size_t j = 0; j < L; ++j) acc[j] = dst[j];
  for (std::size_t i = 0; i < nin; ++i) {
    const T wi = w[i * si];
    const T* src = in + i * P;
    for (std::size_t j = 0; j < L; ++j) acc[j] += wi * src[j];
  }
  for (std::size_t j = 0; j < L; ++j) dst[j] = acc[j];
}

// out[o][p] += sum_i w[o * so + i * si] * in[i][p] for planes of P values.
template <class T>
void mix_channels(const T* in, std::size_t nin, const T* w, std::size_t so, std::size_t si, T* out,
                  std::size_t nout, std::size_t P) {
  std::size_t p0 = 0;
  for (; p0 + kLanes <= P; p0 += kLanes)
    for (std::size_t o = 0; o < nout; ++o) mix_block<T, kLanes>(in + p0, nin, w + o * so, si, P, out + o * P + p0);
  for (; p0 < P; ++p0)
    for (std::size_t o = 0; o < nout; ++o) mix_block<T, 1>(in + p0, nin, w + o * so, si, P, out + o * P + p0);
}

// One H x W plane surrounded by a ring of zeros.
template <class T>
class PaddedPlane {
 public:
  PaddedPlane(std::size_t h, std::size_t w) : h_(h), w_(w), buf_((h + 2) * (w + 2), T(0)) {}
  void load(const T* src) {
    for (std::size_t r = 0; r < h_; ++r) std::copy(src + r * w_, src + (r + 1) * w_, &buf_[(r + 1) * (w_ + 2) + 1]);
  }
  const T* data() const { return buf_.data(); }
  std::size_t h() const { return h_; }
  std::size_t w() const { return w_; }

 private:
  std::size_t h_, w_;
  std::vector<T> buf_;
};

// out[r][c] += sum_t k[t] * pad[r + t/3][c + t%3], or with k rotated by 180
// degrees when `flip` is set.
template <class T>
void correlate3x3(const PaddedPlane<T>& pad, const T* k, bool flip, T* out) {
  const std::size_t H = pad.h(), W = pad.w(), PW = W + 2;
  T kk[9];
  for (int t = 0; t < 9; ++t) kk[t] = flip ? k[8 - t] : k[t];
  for (std::size_t r = 0; r < H; ++r) {
    const T* r0 = pad.data() + r * PW;
    const T* r1 = r0 + PW;
    const T* r2 = r1 + PW;
    T* o = out + r * W;
    for (std::size_t c = 0; c < W; ++c) {
      o[c] += kk[0] * r0[c] + kk[1] * r0[c + 1] + kk[2] * r0[c + 2] + kk[3] * r1[c] + kk[4] * r1[c + 1] +
              kk[5] * r1[c + 2] + kk[6] * r2[c] + kk[7] * r2[c + 1] + kk[8] * r2[c + 2];
    }
  }
}

}  // namespace

template <class T>
BasicVar<T> add(BasicVar<T> a, BasicVar<T> b) {
  require_same_tape("add", a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.shape() != bv.shape()) throw_shape_error("add", av.shape(), bv.shape());
  BasicTensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] + bv[i];
  const bool ga = needs(a), gb = needs(b);
  return a.tape->record("add", std::move(out), ga || gb,
                        [a, b, ga, gb](BasicTape<T>& tape, const BasicTensor<T>& g) {
                          for (auto [v, on] : {std::pair{a, ga}, std::pair{b, gb}}) {
                            if (!on) continue;
                            auto& dst = tape.grad_buffer(v.id);
                            for (std::size_t i = 0; i < g.numel(); ++i) dst[i] += g[i];
                          }
                        });
}

template <class T>
BasicVar<T> mul(BasicVar<T> a, BasicVar<T> b) {
  require_same_tape("mul", a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.shape() != bv.shape()) throw_shape_error("mul", av.shape(), bv.shape());
  BasicTensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[i];
  const bool ga = needs(a), gb = needs(b);
  return a.tape->record("mul", std::move(out), ga || gb,
                        [a, b, ga, gb](BasicTape<T>& tape, const BasicTensor<T>& g) {
                          const auto& av = tape.value(a);
                          const auto& bv = tape.value(b);
                          if (ga) {
                            auto& da = tape.grad_buffer(a.id);
                            for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i] * bv[i];
                          }
                          if (gb) {
                            auto& db = tape.grad_buffer(b.id);
                            for (std::size_t i = 0; i < g.numel(); ++i) db[i] += g[i] * av[i];
                          }
                        });
}

template <class T>
BasicVar<T> matmul(BasicVar<T> a, BasicVar<T> b) {
  require_same_tape("matmul", a, b);
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const auto& av = a.value();
  const auto& bv = b.value();
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  if (bv.dim(0) != k) throw_shape_error("matmul", av.shape(), bv.shape());
  BasicTensor<T> out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    T* orow = out.raw() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T s = av[i * k + p];
      const T* brow = bv.raw() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += s * brow[j];
    }
  }
  const bool ga = needs(a), gb = needs(b);
  return a.tape->record(
      "matmul", std::move(out), ga || gb,
      [a, b, ga, gb, m, k, n](BasicTape<T>& tape, const BasicTensor<T>& g) {
        const auto& av = tape.value(a);
        const auto& bv = tape.value(b);
        if (ga) {
          auto& da = tape.grad_buffer(a.id);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              T s = 0;
              for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bv[p * n + j];
              da[i * k + p] += s;
            }
        }
        if (gb) {
          auto& db = tape.grad_buffer(b.id);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const T s = av[i * k + p];
              for (std::size_t j = 0; j < n; ++j) db[p * n + j] += s * g[i * n + j];
            }
        }
      });
}

template <class T>
BasicVar<T> sum(BasicVar<T> x) {
  const auto& xv = x.value();
  T total = 0;
  for (std::size_t i = 0; i < xv.numel(); ++i) total += xv[i];
  BasicTensor<T> out(Shape{});
  out[0] = total;
  return x.tape->record("sum", std::move(out), needs(x),
                        [x](BasicTape<T>& tape, const BasicTensor<T>& g) {
                          auto& dx = tape.grad_buffer(x.id);
                          for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] += g[0];
                        });
}

template <class T>
BasicVar<T> relu(BasicVar<T> x) {
  const auto& xv = x.value();
  BasicTensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
  return x.tape->record("relu", std::move(out), needs(x),
                        [x](BasicTape<T>& tape, const BasicTensor<T>& g) {
                          const auto& xv = tape.value(x);
                          auto& dx = tape.grad_buffer(x.id);
                          for (std::size_t i = 0; i < g.numel(); ++i)
                            if (xv[i] > T(0)) dx[i] += g[i];
                        });
}

template <class T>
BasicVar<T> depthwise_conv3x3(BasicVar<T> x, BasicVar<T> kernel) {
  require_same_tape("depthwise_conv3x3", x, kernel);
  require_rank("depthwise_conv3x3", x, 4);
  const auto& xv = x.value();
  const auto& kv = kernel.value();
  const std::size_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  if (kv.shape() != Shape{C, 3, 3}) throw_shape_error("depthwise_conv3x3", xv.shape(), kv.shape());
  BasicTensor<T> out(xv.shape());
  const std::size_t P = H * W;
  PaddedPlane<T> pad(H, W);
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    pad.load(xv.raw() + nc * P);
    correlate3x3(pad, kv.raw() + (nc % C) * 9, false, out.raw() + nc * P);
  }
  const bool gx = needs(x), gk = needs(kernel);
  return x.tape->record(
      "depthwise_conv3x3", std::move(out), gx || gk,
      [x, kernel, gx, gk, N, C, H, W](BasicTape<T>& tape, const BasicTensor<T>& g) {
        const auto& xv = tape.value(x);
        const auto& kv = tape.value(kernel);
        const std::size_t P = H * W, PW = W + 2;
        T* dx = gx ? tape.grad_buffer(x.id).raw() : nullptr;
        T* dk = gk ? tape.grad_buffer(kernel.id).raw() : nullptr;
        PaddedPlane<T> gpad(H, W), xpad(H, W);
        for (std::size_t nc = 0; nc < N * C; ++nc) {
          const T* gy = g.raw() + nc * P;
          const T* k = kv.raw() + (nc % C) * 9;
          if (dx) {
            // Transposed correlation: the same sweep with the kernel rotated.
            gpad.load(gy);
            correlate3x3(gpad, k, true, dx + nc * P);
          }
          if (dk) {
            xpad.load(xv.raw() + nc * P);
            T acc[9][kLanes] = {};
            for (std::size_t oh = 0; oh < H; ++oh) {
              const T* grow = gy + oh * W;
              for (std::size_t w0 = 0; w0 < W; w0 += kLanes) {
                const std::size_t len = std::min(kLanes, W - w0);
                for (int t = 0; t < 9; ++t) {
                  const T* xp = xpad.data() + (oh + t / 3) * PW + (t % 3) + w0;
                  lane_fma(acc[t], grow + w0, xp, len);
                }
              }
            }
            for (int t = 0; t < 9; ++t) dk[(nc % C) * 9 + t] += lane_sum(acc[t]);
          }
        }
      });
}

template <class T>
BasicVar<T> pointwise_conv(BasicVar<T> x, BasicVar<T> weight) {
  require_same_tape("pointwise_conv", x, weight);
  require_rank("pointwise_conv", x, 4);
  require_rank("pointwise_conv", weight, 2);
  const auto& xv = x.value();
  const auto& wv = weight.value();
  const std::size_t N = xv.dim(0), Ci = xv.dim(1), P = xv.dim(2) * xv.dim(3);
  const std::size_t Co = wv.dim(0);
  if (wv.dim(1) != Ci) throw_shape_error("pointwise_conv", xv.shape(), wv.shape());
  BasicTensor<T> out({N, Co, xv.dim(2), xv.dim(3)});
  for (std::size_t n = 0; n < N; ++n) {
    mix_channels(xv.raw() + n * Ci * P, Ci, wv.raw(), Ci, 1, out.raw() + n * Co * P, Co, P);
  }
  const bool gx = needs(x), gw = needs(weight);
  return x.tape->record(
      "pointwise_conv", std::move(out), gx || gw,
      [x, weight, gx, gw, N, Ci, Co, P](BasicTape<T>& tape, const BasicTensor<T>& g) {
        const auto& xv = tape.value(x);
        const auto& wv = tape.value(weight);
        T* dx = gx ? tape.grad_buffer(x.id).raw() : nullptr;
        T* dw = gw ? tape.grad_buffer(weight.id).raw() : nullptr;
        for (std::size_t n = 0; n < N; ++n) {
          const T* gy = g.raw() + n * Co * P;
          if (dx) mix_channels(gy, Co, wv.raw(), 1, Ci, dx + n * Ci * P, Ci, P);
          if (dw) {
            const T* in = xv.raw() + n * Ci * P;
            for (std::size_t co = 0; co < Co; ++co)
              for (std::size_t ci = 0; ci < Ci; ++ci) {
                T acc[kLanes] = {};
                for (std::size_t p0 = 0; p0 < P; p0 += kLanes) {
                  lane_fma(acc, gy + co * P + p0, in + ci * P + p0, std::min(kLanes, P - p0));
                }
                dw[co * Ci + ci] += lane_sum(acc);
              }
          }
        }
      });
}

template <class T>
BasicVar<T> channel_norm(BasicVar<T> x, BasicVar<T> gamma, BasicVar<T> beta,
                         const Tensor& running_mean, const Tensor& running_var, NormMode mode,
                         NormBatchStats* observed) {
  require_same_tape("channel_norm", x, gamma);
  require_same_tape("channel_norm", x, beta);
  require_rank("channel_norm", x, 4);
  const auto& xv = x.value();
  const std::size_t N = xv.dim(0), C = xv.dim(1), P = xv.dim(2) * xv.dim(3);
  const Shape cshape{C};
  if (gamma.shape() != cshape) throw_shape_error("channel_norm", xv.shape(), gamma.shape());
  if (beta.shape() != cshape) throw_shape_error("channel_norm", xv.shape(), beta.shape());
  if (running_mean.shape() != cshape) throw_shape_error("channel_norm", xv.shape(), running_mean.shape());
  if (running_var.shape() != cshape) throw_shape_error("channel_norm", xv.shape(), running_var.shape());
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  const std::size_t M = N * P;

  // Per-channel centre and inverse scale actually used for this pass.
  std::vector<T> centre(C), inv_std(C);
  if (mode == NormMode::Train) {
    if (observed) {
      observed->mean.assign(C, 0.0);
      observed->var_unbiased.assign(C, 0.0);
    }
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const T* in = xv.raw() + (n * C + c) * P;
        for (std::size_t p = 0; p < P; ++p) s += in[p];
      }
      const double mean = s / static_cast<double>(M);
      double ss = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const T* in = xv.raw() + (n * C + c) * P;
        for (std::size_t p = 0; p < P; ++p) {
          const double d = in[p] - mean;
          ss += d * d;
        }
      }
      const double var = ss / static_cast<double>(M);
      centre[c] = static_cast<T>(mean);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + kNormEpsilon));
      if (observed) {
        observed->mean[c] = mean;
        observed->var_unbiased[c] = M > 1 ? ss / static_cast<double>(M - 1) : var;
      }
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      centre[c] = static_cast<T>(running_mean[c]);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var[c]) + kNormEpsilon));
    }
  }

  BasicTensor<T> out(xv.shape());
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      const T* in = xv.raw() + (n * C + c) * P;
      T* o = out.raw() + (n * C + c) * P;
      const T a = gv[c] * inv_std[c];
      const T b = bv[c] - a * centre[c];
      for (std::size_t p = 0; p < P; ++p) o[p] = a * in[p] + b;
    }
  }

  const bool gx = needs(x), gg = needs(gamma), gb = needs(beta);
  const bool train = mode == NormMode::Train;
  return x.tape->record(
      "channel_norm", std::move(out), gx || gg || gb,
      [x, gamma, beta, gx, gg, gb, train, N, C, P, M, centre = std::move(centre),
       inv_std = std::move(inv_std)](BasicTape<T>& tape, const BasicTensor<T>& g) {
        const auto& xv = tape.value(x);
        const auto& gv = tape.value(gamma);
        T* dx = gx ? tape.grad_buffer(x.id).raw() : nullptr;
        T* dgamma = gg ? tape.grad_buffer(gamma.id).raw() : nullptr;
        T* dbeta = gb ? tape.grad_buffer(beta.id).raw() : nullptr;
        for (std::size_t c = 0; c < C; ++c) {
          T sum_g = 0, sum_gx = 0;  // sum dy, sum dy * xhat
          for (std::size_t n = 0; n < N; ++n) {
            const T* in = xv.raw() + (n * C + c) * P;
            const T* gy = g.raw() + (n * C + c) * P;
            for (std::size_t p = 0; p < P; ++p) {
              sum_g += gy[p];
              sum_gx += gy[p] * (in[p] - centre[c]) * inv_std[c];
            }
          }
          if (dgamma) dgamma[c] += sum_gx;
          if (dbeta) dbeta[c] += sum_g;
          if (!dx) continue;
          const T scale = gv[c] * inv_std[c];
          if (train) {
            const T inv_m = T(1) / static_cast<T>(M);
            for (std::size_t n = 0; n < N; ++n) {
              const T* in = xv.raw() + (n * C + c) * P;
              const T* gy = g.raw() + (n * C + c) * P;
              T* d = dx + (n * C + c) * P;
              for (std::size_t p = 0; p < P; ++p) {
                const T xhat = (in[p] - centre[c]) * inv_std[c];
                d[p] += scale * (gy[p] - inv_m * sum_g - xhat * inv_m * sum_gx);
              }
            }
          } else {
            for (std::size_t n = 0; n < N; ++n) {
              const T* gy = g.raw() + (n * C + c) * P;
              T* d = dx + (n * C + c) * P;
              for (std::size_t p = 0; p < P; ++p) d[p] += scale * gy[p];
            }
          }
        }
      });
}

void update_running_stats(Tensor& running_mean, Tensor& running_var, const NormBatchStats& batch,
                          float momentum) {
  const std::size_t C = running_mean.numel();
  if (batch.mean.size() != C || batch.var_unbiased.size() != C || running_var.numel() != C) {
    throw ShapeError("update_running_stats: channel count mismatch");
  }
  for (std::size_t c = 0; c < C; ++c) {
    running_mean[c] = momentum * running_mean[c] + (1.0f - momentum) * static_cast<float>(batch.mean[c]);
    running_var[c] =
        momentum * running_var[c] + (1.0f - momentum) * static_cast<float>(batch.var_unbiased[c]);
  }
}

template <class T>
BasicVar<T> avg_pool2x2(BasicVar<T> x) {
  require_rank("avg_pool2x2", x, 4);
  const auto& xv = x.value();
  const std::size_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  if (H < 2 || W < 2) throw ShapeError("avg_pool2x2: spatial extent too small " + shape_str(xv.shape()));
  const std::size_t Ho = H / 2, Wo = W / 2;
  BasicTensor<T> out({N, C, Ho, Wo});
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const T* in = xv.raw() + nc * H * W;
    T* o = out.raw() + nc * Ho * Wo;
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j) {
        const T* p = in + 2 * i * W + 2 * j;
        o[i * Wo + j] = T(0.25) * (p[0] + p[1] + p[W] + p[W + 1]);
      }
  }
  return x.tape->record("avg_pool2x2", std::move(out), needs(x),
                        [x, N, C, H, W, Ho, Wo](BasicTape<T>& tape, const BasicTensor<T>& g) {
                          auto& dx = tape.grad_buffer(x.id);
                          for (std::size_t nc = 0; nc < N * C; ++nc) {
                            T* d = dx.raw() + nc * H * W;
                            const T* gy = g.raw() + nc * Ho * Wo;
                            for (std::size_t i = 0; i < Ho; ++i)
                              for (std::size_t j = 0; j < Wo; ++j) {
                                const T v = T(0.25) * gy[i * Wo + j];
                                T* p = d + 2 * i * W + 2 * j;
                                p[0] += v;
                                p[1] += v;
                                p[W] += v;
                                p[W + 1] += v;
                              }
                          }
                        });
}

template <class T>
BasicVar<T> global_avg_pool(BasicVar<T> x) {
  require_rank("global_avg_pool", x, 4);
  const auto& xv = x.value();
  const std::size_t N = xv.dim(0), C = xv.dim(1), P = xv.dim(2) * xv.dim(3);
  BasicTensor<T> out({N, C});
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const T* in = xv.raw() + nc * P;
    T s = 0;
    for (std::size_t p = 0; p < P; ++p) s += in[p];
    out[nc] = s / static_cast<T>(P);
  }
  return x.tape->record("global_avg_pool", std::move(out), needs(x),
                        [x, N, C, P](BasicTape<T>& tape, const BasicTensor<T>& g) {
                          auto& dx = tape.grad_buffer(x.id);
                          const T inv = T(1) / static_cast<T>(P);
                          for (std::size_t nc = 0; nc < N * C; ++nc) {
                            T* d = dx.raw() + nc * P;
                            const T v = g[nc] * inv;
                            for (std::size_t p = 0; p < P; ++p) d[p] += v;
                          }
                        });
}

template <class T>
BasicVar<T> concat_channels(std::span<const BasicVar<T>> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: no inputs");
  require_rank("concat_channels", parts[0], 4);
  const Shape& first = parts[0].shape();
  const std::size_t N = first[0], P = first[2] * first[3];
  std::size_t total = 0;
  bool any_grad = false;
  for (const auto& p : parts) {
    require_same_tape("concat_channels", parts[0], p);
    const Shape& s = p.shape();
    if (s.size() != 4 || s[0] != N || s[2] != first[2] || s[3] != first[3]) {
      throw_shape_error("concat_channels", first, s);
    }
    total += s[1];
    any_grad = any_grad || needs(p);
  }
  BasicTensor<T> out({N, total, first[2], first[3]});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto& pv = p.value();
    const std::size_t Ci = pv.dim(1);
    for (std::size_t n = 0; n < N; ++n) {
      std::copy_n(pv.raw() + n * Ci * P, Ci * P, out.raw() + (n * total + offset) * P);
    }
    offset += Ci;
  }
  std::vector<BasicVar<T>> inputs(parts.begin(), parts.end());
  return parts[0].tape->record(
      "concat_channels", std::move(out), any_grad,
      [inputs = std::move(inputs), N, P, total](BasicTape<T>& tape, const BasicTensor<T>& g) {
        std::size_t offset = 0;
        for (const auto& p : inputs) {
          const std::size_t Ci = tape.value(p).dim(1);
          if (tape.requires_grad(p)) {
            auto& d = tape.grad_buffer(p.id);
            for (std::size_t n = 0; n < N; ++n) {
              const T* src = g.raw() + (n * total + offset) * P;
              T* dst = d.raw() + n * Ci * P;
              for (std::size_t i = 0; i < Ci * P; ++i) dst[i] += src[i];
            }
          }
          offset += Ci;
        }
      });
}

template <class T>
BasicVar<T> linear(BasicVar<T> x, BasicVar<T> weight, BasicVar<T> bias) {
  require_same_tape("linear", x, weight);
  require_same_tape("linear", x, bias);
  require_rank("linear", x, 2);
  require_rank("linear", weight, 2);
  const auto& xv = x.value();
  const auto& wv = weight.value();
  const auto& bv = bias.value();
  const std::size_t N = xv.dim(0), D = xv.dim(1), O = wv.dim(0);
  if (wv.dim(1) != D) throw_shape_error("linear", xv.shape(), wv.shape());
  if (bv.shape() != Shape{O}) throw_shape_error("linear", wv.shape(), bv.shape());
  BasicTensor<T> out({N, O});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o) {
      T s = bv[o];
      for (std::size_t d = 0; d < D; ++d) s += wv[o * D + d] * xv[n * D + d];
      out[n * O + o] = s;
    }
  const bool gx = needs(x), gw = needs(weight), gb = needs(bias);
  return x.tape->record(
      "linear", std::move(out), gx || gw || gb,
      [x, weight, bias, gx, gw, gb, N, D, O](BasicTape<T>& tape, const BasicTensor<T>& g) {
        const auto& xv = tape.value(x);
        const auto& wv = tape.value(weight);
        T* dx = gx ? tape.grad_buffer(x.id).raw() : nullptr;
        T* dw = gw ? tape.grad_buffer(weight.id).raw() : nullptr;
        T* db = gb ? tape.grad_buffer(bias.id).raw() : nullptr;
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t o = 0; o < O; ++o) {
            const T go = g[n * O + o];
            if (db) db[o] += go;
            for (std::size_t d = 0; d < D; ++d) {
              if (dx) dx[n * D + d] += go * wv[o * D + d];
              if (dw) dw[o * D + d] += go * xv[n * D + d];
            }
          }
      });
}

template <class T>
BasicVar<T> softmax_cross_entropy(BasicVar<T> logits, std::span<const int> labels) {
  require_rank("softmax_cross_entropy", logits, 2);
  const auto& lv = logits.value();
  const std::size_t N = lv.dim(0), K = lv.dim(1);
  if (labels.size() != N) {
    throw_shape_error("softmax_cross_entropy", lv.shape(), Shape{labels.size()});
  }
  BasicTensor<T> probs({N, K});
  double total = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    const int y = labels[n];
    if (y < 0 || static_cast<std::size_t>(y) >= K) {
      throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(y) +
                              " outside [0, " + std::to_string(K) + ")");
    }
    const T* row = lv.raw() + n * K;
    const T mx = *std::max_element(row, row + K);
    T z = 0;
    for (std::size_t k = 0; k < K; ++k) {
      probs[n * K + k] = std::exp(row[k] - mx);
      z += probs[n * K + k];
    }
    for (std::size_t k = 0; k < K; ++k) probs[n * K + k] /= z;
    total += static_cast<double>(std::log(z) + mx - row[y]);
  }
  BasicTensor<T> out(Shape{});
  out[0] = static_cast<T>(total / static_cast<double>(N));
  std::vector<int> y(labels.begin(), labels.end());
  return logits.tape->record(
      "softmax_cross_entropy", std::move(out), needs(logits),
      [logits, probs = std::move(probs), y = std::move(y), N, K](BasicTape<T>& tape,
                                                                 const BasicTensor<T>& g) {
        auto& d = tape.grad_buffer(logits.id);
        const T s = g[0] / static_cast<T>(N);
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t k = 0; k < K; ++k) {
            const T onehot = static_cast<std::size_t>(y[n]) == k ? T(1) : T(0);
            d[n * K + k] += s * (probs[n * K + k] - onehot);
          }
      });
}

#define ROBNAS_INSTANTIATE_OPS(T)                                                              \
  template BasicVar<T> add(BasicVar<T>, BasicVar<T>);                                          \
  template BasicVar<T> mul(BasicVar<T>, BasicVar<T>);                                          \
  template BasicVar<T> matmul(BasicVar<T>, BasicVar<T>);                                       \
  template BasicVar<T> sum(BasicVar<T>);                                                       \
  template BasicVar<T> relu(BasicVar<T>);                                                      \
  template BasicVar<T> depthwise_conv3x3(BasicVar<T>, BasicVar<T>);                            \
  template BasicVar<T> pointwise_conv(BasicVar<T>, BasicVar<T>);                               \
  template BasicVar<T> channel_norm(BasicVar<T>, BasicVar<T>, BasicVar<T>, const Tensor&,      \
                                    const Tensor&, NormMode, NormBatchStats*);                 \
  template BasicVar<T> avg_pool2x2(BasicVar<T>);                                               \
  template BasicVar<T> global_avg_pool(BasicVar<T>);                                           \
  template BasicVar<T> concat_channels(std::span<const BasicVar<T>>);                          \
  template BasicVar<T> linear(BasicVar<T>, BasicVar<T>, BasicVar<T>);                          \
  template BasicVar<T> softmax_cross_entropy(BasicVar<T>, std::span<const int>);

ROBNAS_INSTANTIATE_OPS(float)
ROBNAS_INSTANTIATE_OPS(double)

#undef ROBNAS_INSTANTIATE_OPS

}  // namespace robnas::ops
