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

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace robnas {

/// Seedable generator built on std::mt19937_64, whose output sequence is fixed
/// by the C++ standard. All derived draws are computed here from raw 64-bit
/// words (no std::*_distribution), so sequences match across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller (second variate is discarded).
  double normal();
  bool bernoulli(double p) { return uniform() < p; }
  /// Unbiased integer in [0, n); n > 0.
  std::uint64_t below(std::uint64_t n);

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Pipeline stages that own an independent random stream.
enum class Stage : std::uint64_t {
  Data = 1,
  SupernetInit = 2,
  SupernetTrain = 3,
  Sample = 4,
  Finetune = 5,
  Evaluate = 6,
  Fsp = 7,
  Probe = 8,
  Transfer = 9,
};

/// Per-stage seed: splitmix64(splitmix64(master ^ (stage << 56)) + counter).
/// `counter` distinguishes repeated uses inside a stage (e.g. candidate id).
std::uint64_t derive_seed(std::uint64_t master, Stage stage, std::uint64_t counter = 0);

}  // namespace robnas
