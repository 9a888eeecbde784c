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

#include <vector>

namespace robnas::testing {

/// Byte value of pixel i (channel-major) in synthetic record r.
inline unsigned char cifar_pixel(std::size_t r, std::size_t i) {
  if (r == 0 && i == 0) return 255;
  return static_cast<unsigned char>((i * 7 + r * 31 + i / 1024 * 50) % 256);
}

/// Two hand-built records with labels 3 and 9.
inline std::vector<unsigned char> two_cifar_records() {
  std::vector<unsigned char> out;
  const unsigned char labels[] = {3, 9};
  for (std::size_t r = 0; r < 2; ++r) {
    out.push_back(labels[r]);
    for (std::size_t i = 0; i < 3072; ++i) out.push_back(cifar_pixel(r, i));
  }
  return out;
}

}  // namespace robnas::testing
