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

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "robnas/rng.hpp"

namespace robnas::arch {

/// Non-zero operations, in gene order. An edge with both genes off is the
/// zero operation.
enum class Op : std::size_t { SepConv3x3 = 0, Identity = 1 };
inline constexpr std::size_t kNumOps = 2;

enum class SearchMode { CellBased, CellFree };

std::string_view mode_name(SearchMode mode);
SearchMode parse_mode(std::string_view text);

class ArchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Edge {
  int from;
  int to;
};

/// Cell DAG: input nodes 0 and 1, intermediate nodes 2..N+1, and an edge
/// (i, j) for every intermediate j and every i < j. Edges are kept in
/// lexicographic (j, i) order, which is also the gene order everywhere.
class CellSpace {
 public:
  explicit CellSpace(int intermediate_nodes = 4);

  int intermediate_nodes() const { return intermediate_nodes_; }
  int num_nodes() const { return intermediate_nodes_ + 2; }
  std::size_t num_edges() const { return edges_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }
  const Edge& edge(std::size_t e) const { return edges_.at(e); }

  /// Direct edges join consecutive node indices; all others are skip edges.
  bool is_direct(std::size_t e) const { return edges_.at(e).to == edges_.at(e).from + 1; }
  std::size_t num_direct_edges() const;
  std::size_t edge_index(int from, int to) const;
  /// Indices of edges entering `node`, ascending by source.
  std::vector<std::size_t> incoming(int node) const;
  std::string edge_label(std::size_t e) const;

 private:
  int intermediate_nodes_;
  std::vector<Edge> edges_;
};

/// gene[Op::SepConv3x3], gene[Op::Identity]
using Gene = std::array<std::uint8_t, kNumOps>;
using GeneMatrix = std::vector<Gene>;

/// Binary architecture parameter. Cell-based mode holds one gene matrix shared
/// by every cell; cell-free mode holds one per cell.
struct ArchParams {
  SearchMode mode = SearchMode::CellBased;
  int nodes = 4;
  std::vector<GeneMatrix> cells;

  CellSpace space() const { return CellSpace(nodes); }
  /// Gene matrix driving network cell `l` (broadcast in cell-based mode).
  const GeneMatrix& for_cell(std::size_t l) const;
  /// Throws ArchError unless shapes match the mode, `num_cells` (cell-free)
  /// and every entry is 0 or 1.
  void validate(std::size_t num_cells = 0) const;
  /// Row-major flattening: cells, edges, genes.
  std::vector<float> flatten() const;

  static ArchParams filled(const CellSpace& space, SearchMode mode, std::size_t num_cells,
                           std::uint8_t value);

  bool operator==(const ArchParams&) const = default;
};

std::size_t conv_count(const GeneMatrix& genes);
std::size_t gene_count(const GeneMatrix& genes);

struct EdgeStats {
  std::size_t conv_direct = 0;
  std::size_t conv_skip = 0;
  std::size_t identity_direct = 0;
  std::size_t identity_skip = 0;

  std::size_t conv_total() const { return conv_direct + conv_skip; }
};

/// Summed over all cells of `alpha`.
EdgeStats edge_stats(const ArchParams& alpha);

enum class DensityVariant {
  /// Active genes / |E|, range [0, 2].
  Literal,
  /// Edges with any active gene / |E|, range [0, 1].
  EdgeConnected,
};

/// Architecture density, averaged over cells in cell-free mode.
double density(const ArchParams& alpha, DensityVariant variant = DensityVariant::Literal);

enum class BudgetClass { Small, Medium, Large };
std::string_view budget_name(BudgetClass cls);

struct Budget {
  BudgetClass cls;
  std::size_t conv_count;
};

/// Small: <= 7 convolutions, Medium: 8..10, Large: >= 11. Cell-based only.
Budget conv_budget_class(const ArchParams& alpha);

/// Convolutions on direct edges over all convolutions; nullopt when there are
/// no convolutions.
std::optional<double> direct_conv_proportion(const ArchParams& alpha);

/// Every gene i.i.d. Bernoulli(0.5), drawn cell by cell in gene order.
ArchParams sample_alpha(Rng& rng, const CellSpace& space, SearchMode mode, std::size_t num_cells);

/// Canonical compact JSON: {"N":4,"cells":[[[c,i],...]],"mode":"cell-based"}.
std::string to_genotype_json(const ArchParams& alpha);
ArchParams parse_genotype_json(std::string_view text);

std::string metrics_csv_header();
std::string metrics_csv_row(std::size_t id, const ArchParams& alpha);

}  // namespace robnas::arch
