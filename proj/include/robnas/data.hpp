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

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "robnas/rng.hpp"
#include "robnas/tensor.hpp"

namespace robnas {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Labelled images with pixels in [0, 1], stored as one [n, c, h, w] tensor.
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  std::size_t num_classes = 10;
  std::string split = "train";

  std::size_t size() const { return labels.size(); }
  Shape image_shape() const { return {images.dim(1), images.dim(2), images.dim(3)}; }

  Tensor gather_images(std::span<const std::size_t> idx) const;
  std::vector<int> gather_labels(std::span<const std::size_t> idx) const;
  Dataset subset(std::span<const std::size_t> idx, std::string split_name) const;

  /// Throws DataError unless n > 0, pixels lie in [0, 1] and labels in range.
  void validate() const;
};

inline constexpr std::size_t kCifarRecordBytes = 3073;

/// One label byte then 3x32x32 channel-major pixel bytes per record.
Dataset parse_cifar10_binary(std::span<const unsigned char> bytes, const std::string& source = "<memory>");
Dataset load_cifar10_binary(const std::filesystem::path& path);
/// Pixels are quantised with round(v * 255).
std::vector<unsigned char> encode_cifar10_binary(const Dataset& data);
void write_cifar10_binary(const std::filesystem::path& path, const Dataset& data);

struct SynthConfig {
  std::size_t n = 2000;
  std::size_t classes = 2;
  std::size_t channels = 3;
  std::size_t size = 16;
  /// Peak blob contrast against the grey background.
  double amplitude = 0.35;
  /// Per-pixel Gaussian noise sigma.
  double noise = 0.12;
};

/// Class-conditional blobs: each class owns a colour and a centre, every
/// image is grey + amplitude * colour * gaussian bump + pixel noise, clamped.
Dataset synth_dataset(Rng& rng, const SynthConfig& cfg);

/// Seeded shuffle, then the first round(n * val_fraction) go to validation.
std::pair<Dataset, Dataset> split_train_val(const Dataset& data, double val_fraction, Rng& rng);

}  // namespace robnas
