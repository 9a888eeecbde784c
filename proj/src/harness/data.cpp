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

#include "robnas/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

namespace robnas {

namespace {

constexpr std::size_t kCifarPixels = 3 * 32 * 32;

}  // namespace

Tensor Dataset::gather_images(std::span<const std::size_t> idx) const {
  const std::size_t per = images.numel() / std::max<std::size_t>(size(), 1);
  Shape shape = images.shape();
  shape[0] = idx.size();
  Tensor out(shape);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    std::memcpy(out.raw() + k * per, images.raw() + idx[k] * per, per * sizeof(float));
  }
  return out;
}

std::vector<int> Dataset::gather_labels(std::span<const std::size_t> idx) const {
  std::vector<int> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(labels.at(i));
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> idx, std::string split_name) const {
  return Dataset{gather_images(idx), gather_labels(idx), num_classes, std::move(split_name)};
}

void Dataset::validate() const {
  if (labels.empty()) throw DataError(split + " split is empty");
  if (images.rank() != 4 || images.dim(0) != labels.size()) {
    throw DataError(split + " split: image tensor " + shape_str(images.shape()) + " does not match " +
                    std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < images.numel(); ++i) {
    const float v = images[i];
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw DataError(split + " split: pixel " + std::to_string(i) + " outside [0, 1]");
    }
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw DataError(split + " split: label " + std::to_string(labels[i]) + " of example " +
                      std::to_string(i) + " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

Dataset parse_cifar10_binary(std::span<const unsigned char> bytes, const std::string& source) {
  if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0) {
    const std::size_t whole = bytes.size() / kCifarRecordBytes;
    throw DataError(source + ": size " + std::to_string(bytes.size()) + " is not a positive multiple of " +
                    std::to_string(kCifarRecordBytes) + " (expected " +
                    std::to_string((whole + 1) * kCifarRecordBytes) + " bytes, record at byte offset " +
                    std::to_string(whole * kCifarRecordBytes) + " is truncated)");
  }
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  Dataset d;
  d.num_classes = 10;
  d.images = Tensor({n, 3, 32, 32});
  d.labels.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const unsigned char* rec = bytes.data() + r * kCifarRecordBytes;
    if (rec[0] > 9) {
      throw DataError(source + ": label " + std::to_string(rec[0]) + " at byte offset " +
                      std::to_string(r * kCifarRecordBytes) + " exceeds 9");
    }
    d.labels[r] = rec[0];
    float* px = d.images.raw() + r * kCifarPixels;
    for (std::size_t i = 0; i < kCifarPixels; ++i) px[i] = static_cast<float>(rec[1 + i]) / 255.0f;
  }
  return d;
}

Dataset load_cifar10_binary(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return parse_cifar10_binary(bytes, path.string());
}

std::vector<unsigned char> encode_cifar10_binary(const Dataset& data) {
  if (data.images.rank() != 4 || data.image_shape() != Shape{3, 32, 32}) {
    throw DataError("CIFAR-10 records need 3x32x32 images, got " + shape_str(data.images.shape()));
  }
  data.validate();
  std::vector<unsigned char> out(data.size() * kCifarRecordBytes);
  for (std::size_t r = 0; r < data.size(); ++r) {
    if (data.labels[r] > 9) throw DataError("label " + std::to_string(data.labels[r]) + " exceeds 9");
    unsigned char* rec = out.data() + r * kCifarRecordBytes;
    rec[0] = static_cast<unsigned char>(data.labels[r]);
    const float* px = data.images.raw() + r * kCifarPixels;
    for (std::size_t i = 0; i < kCifarPixels; ++i) {
      rec[1 + i] = static_cast<unsigned char>(std::lround(px[i] * 255.0f));
    }
  }
  return out;
}

void write_cifar10_binary(const std::filesystem::path& path, const Dataset& data) {
  const auto bytes = encode_cifar10_binary(data);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw DataError("short write to " + path.string());
}

Dataset synth_dataset(Rng& rng, const SynthConfig& cfg) {
  if (cfg.n == 0 || cfg.classes < 2 || cfg.channels == 0 || cfg.size == 0) {
    throw DataError("synthetic dataset needs n > 0, at least 2 classes and a non-empty image");
  }
  const std::size_t c = cfg.channels, s = cfg.size, plane = s * s;
  struct Proto {
    std::vector<double> colour;
    double cy, cx;
  };
  std::vector<Proto> protos(cfg.classes);
  for (auto& p : protos) {
    for (std::size_t ch = 0; ch < c; ++ch) p.colour.push_back(rng.uniform(-1.0, 1.0));
    p.cy = rng.uniform(0.25, 0.75) * static_cast<double>(s);
    p.cx = rng.uniform(0.25, 0.75) * static_cast<double>(s);
  }
  const double sigma = static_cast<double>(s) / 4.0;

  Dataset d;
  d.num_classes = cfg.classes;
  d.images = Tensor({cfg.n, c, s, s});
  d.labels.resize(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    const std::size_t k = rng.below(cfg.classes);
    d.labels[i] = static_cast<int>(k);
    const Proto& p = protos[k];
    float* img = d.images.raw() + i * c * plane;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < s; ++y)
        for (std::size_t x = 0; x < s; ++x) {
          const double dy = static_cast<double>(y) - p.cy, dx = static_cast<double>(x) - p.cx;
          const double bump = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
          const double v = 0.5 + cfg.amplitude * p.colour[ch] * bump + cfg.noise * rng.normal();
          img[ch * plane + y * s + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
  }
  return d;
}

std::pair<Dataset, Dataset> split_train_val(const Dataset& data, double val_fraction, Rng& rng) {
  if (val_fraction <= 0.0 || val_fraction >= 1.0) {
    throw DataError("validation fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(idx));
  const auto nval = static_cast<std::size_t>(std::llround(static_cast<double>(data.size()) * val_fraction));
  if (nval == 0 || nval >= data.size()) throw DataError("split leaves an empty side");
  std::span<const std::size_t> all(idx);
  return {data.subset(all.subspan(nval), "train"), data.subset(all.first(nval), "val")};
}

}  // namespace robnas
