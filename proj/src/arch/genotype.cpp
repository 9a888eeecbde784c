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

#include "robnas/genotype.hpp"

namespace robnas::arch {

using nlohmann::json;

json genotype_to_json(const ArchParams& alpha) {
  json cells = json::array();
  for (const auto& cell : alpha.cells) {
    json rows = json::array();
    for (const auto& g : cell) rows.push_back(json::array({g[0], g[1]}));
    cells.push_back(std::move(rows));
  }
  return json{{"mode", std::string(mode_name(alpha.mode))}, {"N", alpha.nodes}, {"cells", cells}};
}

ArchParams genotype_from_json(const json& j) {
  if (!j.is_object()) throw ArchError("genotype: expected a JSON object");
  for (const char* key : {"mode", "N", "cells"}) {
    if (!j.contains(key)) throw ArchError(std::string("genotype: missing key '") + key + "'");
  }
  if (!j["mode"].is_string()) throw ArchError("genotype: 'mode' must be a string");
  if (!j["N"].is_number_integer()) throw ArchError("genotype: 'N' must be an integer");
  if (!j["cells"].is_array() || j["cells"].empty()) {
    throw ArchError("genotype: 'cells' must be a non-empty array");
  }
  ArchParams a;
  a.mode = parse_mode(j["mode"].get<std::string>());
  a.nodes = j["N"].get<int>();
  const CellSpace space(a.nodes);
  std::size_t l = 0;
  for (const auto& cell : j["cells"]) {
    const std::string where = "genotype: cell " + std::to_string(l);
    if (!cell.is_array() || cell.size() != space.num_edges()) {
      throw ArchError(where + ": expected " + std::to_string(space.num_edges()) + " edges, got " +
                      (cell.is_array() ? std::to_string(cell.size()) : std::string("non-array")));
    }
    GeneMatrix genes(space.num_edges());
    for (std::size_t e = 0; e < space.num_edges(); ++e) {
      const auto& pair = cell[e];
      if (!pair.is_array() || pair.size() != kNumOps) {
        throw ArchError(where + " edge " + std::to_string(e) + ": expected 2 genes");
      }
      for (std::size_t k = 0; k < kNumOps; ++k) {
        const auto& v = pair[k];
        if (!v.is_number_integer() || v.get<long long>() < 0 || v.get<long long>() > 1) {
          throw ArchError(where + " edge " + std::to_string(e) + " gene " + std::to_string(k) +
                          ": value " + v.dump() + " is not a bit");
        }
        genes[e][k] = static_cast<std::uint8_t>(v.get<int>());
      }
    }
    a.cells.push_back(std::move(genes));
    ++l;
  }
  a.validate();
  return a;
}

std::string to_genotype_json(const ArchParams& alpha) { return genotype_to_json(alpha).dump(); }

ArchParams parse_genotype_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ArchError("genotype: malformed JSON at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  return genotype_from_json(j);
}

}  // namespace robnas::arch
