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

#include "robnas/arch.hpp"

#include <sstream>

#include "robnas/text.hpp"

namespace robnas::arch {

std::string_view mode_name(SearchMode mode) {
  return mode == SearchMode::CellBased ? "cell-based" : "cell-free";
}

SearchMode parse_mode(std::string_view text) {
  if (text == "cell-based") return SearchMode::CellBased;
  if (text == "cell-free") return SearchMode::CellFree;
  throw ArchError("unknown search mode '" + std::string(text) + "' (cell-based|cell-free)");
}

CellSpace::CellSpace(int intermediate_nodes) : intermediate_nodes_(intermediate_nodes) {
  if (intermediate_nodes < 1) {
    throw ArchError("cell space needs at least one intermediate node, got " +
                    std::to_string(intermediate_nodes));
  }
  for (int j = 2; j < num_nodes(); ++j)
    for (int i = 0; i < j; ++i) edges_.push_back({i, j});
}

std::size_t CellSpace::num_direct_edges() const {
  std::size_t n = 0;
  for (std::size_t e = 0; e < edges_.size(); ++e) n += is_direct(e);
  return n;
}

std::size_t CellSpace::edge_index(int from, int to) const {
  for (std::size_t e = 0; e < edges_.size(); ++e)
    if (edges_[e].from == from && edges_[e].to == to) return e;
  throw ArchError("no edge (" + std::to_string(from) + "," + std::to_string(to) + ") in cell space");
}

std::vector<std::size_t> CellSpace::incoming(int node) const {
  std::vector<std::size_t> out;
  for (std::size_t e = 0; e < edges_.size(); ++e)
    if (edges_[e].to == node) out.push_back(e);
  return out;
}

std::string CellSpace::edge_label(std::size_t e) const {
  const auto& ed = edges_.at(e);
  return "(" + std::to_string(ed.from) + "," + std::to_string(ed.to) + ")";
}

const GeneMatrix& ArchParams::for_cell(std::size_t l) const {
  if (cells.empty()) throw ArchError("architecture has no gene matrices");
  return mode == SearchMode::CellBased ? cells.front() : cells.at(l);
}

void ArchParams::validate(std::size_t num_cells) const {
  const CellSpace sp(nodes);
  if (cells.empty()) throw ArchError("architecture has no gene matrices");
  if (mode == SearchMode::CellBased && cells.size() != 1) {
    throw ArchError("cell-based architecture must hold exactly 1 gene matrix, got " +
                    std::to_string(cells.size()));
  }
  if (mode == SearchMode::CellFree && num_cells != 0 && cells.size() != num_cells) {
    throw ArchError("cell-free architecture must hold " + std::to_string(num_cells) +
                    " gene matrices, got " + std::to_string(cells.size()));
  }
  for (std::size_t l = 0; l < cells.size(); ++l) {
    if (cells[l].size() != sp.num_edges()) {
      throw ArchError("cell " + std::to_string(l) + ": expected " + std::to_string(sp.num_edges()) +
                      " edges, got " + std::to_string(cells[l].size()));
    }
    for (std::size_t e = 0; e < cells[l].size(); ++e)
      for (std::size_t k = 0; k < kNumOps; ++k)
        if (cells[l][e][k] > 1) {
          throw ArchError("cell " + std::to_string(l) + " edge " + std::to_string(e) + " gene " +
                          std::to_string(k) + ": value " + std::to_string(cells[l][e][k]) +
                          " is not a bit");
        }
  }
}

std::vector<float> ArchParams::flatten() const {
  std::vector<float> out;
  for (const auto& cell : cells)
    for (const auto& g : cell)
      for (auto bit : g) out.push_back(static_cast<float>(bit));
  return out;
}

ArchParams ArchParams::filled(const CellSpace& space, SearchMode mode, std::size_t num_cells,
                              std::uint8_t value) {
  ArchParams a;
  a.mode = mode;
  a.nodes = space.intermediate_nodes();
  const std::size_t n = mode == SearchMode::CellBased ? 1 : num_cells;
  a.cells.assign(n, GeneMatrix(space.num_edges(), Gene{value, value}));
  return a;
}

std::size_t conv_count(const GeneMatrix& genes) {
  std::size_t n = 0;
  for (const auto& g : genes) n += g[static_cast<std::size_t>(Op::SepConv3x3)];
  return n;
}

std::size_t gene_count(const GeneMatrix& genes) {
  std::size_t n = 0;
  for (const auto& g : genes) n += g[0] + g[1];
  return n;
}

EdgeStats edge_stats(const ArchParams& alpha) {
  const CellSpace sp(alpha.nodes);
  EdgeStats s;
  for (const auto& cell : alpha.cells)
    for (std::size_t e = 0; e < cell.size(); ++e) {
      const bool direct = sp.is_direct(e);
      const auto conv = cell[e][static_cast<std::size_t>(Op::SepConv3x3)];
      const auto ident = cell[e][static_cast<std::size_t>(Op::Identity)];
      (direct ? s.conv_direct : s.conv_skip) += conv;
      (direct ? s.identity_direct : s.identity_skip) += ident;
    }
  return s;
}

double density(const ArchParams& alpha, DensityVariant variant) {
  if (alpha.cells.empty()) throw ArchError("density of an empty architecture");
  const double edges = static_cast<double>(CellSpace(alpha.nodes).num_edges());
  double total = 0.0;
  for (const auto& cell : alpha.cells) {
    std::size_t active = 0;
    for (const auto& g : cell) {
      active += variant == DensityVariant::Literal ? g[0] + g[1] : (g[0] | g[1]);
    }
    total += static_cast<double>(active) / edges;
  }
  return total / static_cast<double>(alpha.cells.size());
}

std::string_view budget_name(BudgetClass cls) {
  switch (cls) {
    case BudgetClass::Small: return "small";
    case BudgetClass::Medium: return "medium";
    case BudgetClass::Large: return "large";
  }
  return "?";
}

Budget conv_budget_class(const ArchParams& alpha) {
  if (alpha.mode != SearchMode::CellBased) {
    throw ArchError("budget class is defined per cell; cell-free architectures are rejected");
  }
  const std::size_t n = conv_count(alpha.for_cell(0));
  if (n <= 7) return {BudgetClass::Small, n};
  if (n <= 10) return {BudgetClass::Medium, n};
  return {BudgetClass::Large, n};
}

std::optional<double> direct_conv_proportion(const ArchParams& alpha) {
  const EdgeStats s = edge_stats(alpha);
  if (s.conv_total() == 0) return std::nullopt;
  return static_cast<double>(s.conv_direct) / static_cast<double>(s.conv_total());
}

ArchParams sample_alpha(Rng& rng, const CellSpace& space, SearchMode mode, std::size_t num_cells) {
  ArchParams a;
  a.mode = mode;
  a.nodes = space.intermediate_nodes();
  const std::size_t n = mode == SearchMode::CellBased ? 1 : num_cells;
  if (n == 0) throw ArchError("cell-free sampling needs at least one cell");
  a.cells.assign(n, GeneMatrix(space.num_edges()));
  for (auto& cell : a.cells)
    for (auto& g : cell)
      for (auto& bit : g) bit = static_cast<std::uint8_t>(rng.next_u64() >> 63);
  return a;
}

std::string metrics_csv_header() { return "id,mode,conv_count,density,direct_prop,budget_class"; }

std::string metrics_csv_row(std::size_t id, const ArchParams& alpha) {
  std::ostringstream os;
  const auto prop = direct_conv_proportion(alpha);
  os << id << ',' << mode_name(alpha.mode) << ',' << edge_stats(alpha).conv_total() << ','
     << format_number(density(alpha)) << ',' << (prop ? format_number(*prop) : "") << ',';
  if (alpha.mode == SearchMode::CellBased) os << budget_name(conv_budget_class(alpha).cls);
  return os.str();
}

}  // namespace robnas::arch
