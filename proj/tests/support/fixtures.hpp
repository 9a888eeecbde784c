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

#include <sstream>
#include <string>

#include "robnas/supernet.hpp"

namespace robnas::testing {

inline net::MacroConfig desk_macro(std::size_t cells = 2, std::size_t c0 = 8) {
  net::MacroConfig m;
  m.cells = cells;
  m.stem_channels = c0;
  m.num_classes = 2;
  m.in_channels = 3;
  m.height = 16;
  m.width = 16;
  return m;
}

/// Gives every norm layer non-trivial affine and running statistics, as a
/// trained bank would have, so eval-mode comparisons exercise all of them.
inline void perturb_norms(ParameterSet& ps, Rng& rng) {
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const std::string& n = ps.name(i);
    auto ends = [&](const char* s) {
      const std::string suf(s);
      return n.size() >= suf.size() && n.compare(n.size() - suf.size(), suf.size(), suf) == 0;
    };
    for (auto& v : ps.at(i).data()) {
      if (ends("/gamma")) v = static_cast<float>(rng.uniform(0.5, 1.5));
      else if (ends("/beta") || ends("/running_mean")) v = static_cast<float>(rng.uniform(-0.3, 0.3));
      else if (ends("/running_var")) v = static_cast<float>(rng.uniform(0.2, 2.0));
    }
  }
}

inline Tensor random_images(Rng& rng, std::size_t n, const net::MacroConfig& m) {
  Tensor t({n, m.in_channels, m.height, m.width});
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform());
  return t;
}

inline std::string checkpoint_bytes(const std::vector<NamedTensor>& records) {
  std::ostringstream os;
  write_checkpoint(os, records);
  return os.str();
}

}  // namespace robnas::testing
