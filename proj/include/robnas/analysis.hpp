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
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"
#include "robnas/adversary.hpp"
#include "robnas/arch.hpp"

namespace robnas::analysis {

/// One evaluated architecture. Structural fields are derived from `alpha` by
/// describe_candidate(); accuracies are correct/total over the evaluation split.
struct CandidateReport {
  std::size_t id = 0;
  arch::ArchParams alpha;
  std::size_t conv_count = 0;
  double density = 0.0;
  double density_connected = 0.0;
  std::optional<double> direct_conv_proportion;
  std::optional<arch::BudgetClass> budget;  // cell-based only
  std::size_t eval_total = 0;
  std::size_t clean_correct = 0;
  std::size_t robust_correct = 0;
  double clean_acc = 0.0;
  double robust_acc = 0.0;
  adv::AttackKind attack_kind = adv::AttackKind::Pgd;
  adv::AttackConfig attack;
  std::optional<std::vector<double>> fsp_profile;
  bool finetuned = false;

  /// Accuracies in [0, 1]; profile length equals `num_cells` when present.
  void validate(std::size_t num_cells) const;
};

CandidateReport describe_candidate(std::size_t id, const arch::ArchParams& alpha);
/// Fills counts and accuracies from an evaluation.
void set_accuracy(CandidateReport& r, const adv::EvalResult& eval);

nlohmann::ordered_json report_to_json(const CandidateReport& r);
CandidateReport report_from_json(const nlohmann::json& j);

/// One compact JSON object per line, in the given order.
std::string to_jsonl(std::span<const CandidateReport> reports);
/// Errors name the 1-based line.
std::vector<CandidateReport> parse_jsonl(std::string_view text);
void write_reports(const std::filesystem::path& path, std::span<const CandidateReport> reports);
std::vector<CandidateReport> read_reports(const std::filesystem::path& path);

class AnalysisError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Linear probe

struct LabeledArch {
  std::size_t id;
  std::vector<double> features;  // flattened alpha
  int label;                     // +1 or -1
};

/// Sorts by robust_acc descending (ties: lower id first); the first `top_k`
/// get +1, the last `bottom_k` get -1. Output is top block then bottom block.
std::vector<LabeledArch> label_extremes(std::span<const CandidateReport> reports, std::size_t top_k,
                                        std::size_t bottom_k);

struct ProbeConfig {
  int epochs = 200;
  double lr = 0.01;
};

struct ProbeModel {
  std::vector<double> w;
  double b = 0.0;

  /// sign(w . x + b), with 0 for a point on the hyperplane.
  int predict(std::span<const double> x) const;
};

struct ProbeResult {
  ProbeModel model;
  double train_accuracy = 0.0;
};

/// Hinge-loss SGD from w = 0, b = 0: per example in a freshly shuffled
/// order each epoch, if y (w.x + b) < 1 then w += lr y x, b += lr y.
ProbeResult train_probe(std::span<const LabeledArch> data, Rng& rng, const ProbeConfig& cfg = {});

/// Rows "edge,op,weight"; cell-free weights are prefixed "cell{l}:".
std::string probe_weights_csv(const ProbeModel& model, const arch::ArchParams& shape);

// ---------------------------------------------------------------------------
// Correlation and histograms

/// Nullopt with fewer than 3 points or a constant series.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

enum class Metric { Density, DensityConnected, ConvCount, DirectProportion, CleanAcc, RobustAcc, FspMean };
std::string metric_name(Metric m);
Metric parse_metric(std::string_view name);
/// Nullopt when the report lacks the metric.
std::optional<double> metric_value(const CandidateReport& r, Metric m);

struct Correlation {
  Metric x, y;
  std::optional<double> r;
  /// (id, x, y) for every report carrying both metrics, in input order.
  std::vector<std::tuple<std::size_t, double, double>> points;
};

Correlation correlate(std::span<const CandidateReport> reports, Metric x, Metric y);
/// Header "id,<x>,<y>".
std::string scatter_csv(const Correlation& c);

/// Equal-width bins over [lo, hi]; hi itself lands in the last bin. Header
/// "bin_lo,bin_hi,count".
std::string histogram_csv(std::span<const double> values, std::size_t bins, double lo = 0.0, double hi = 1.0);

// ---------------------------------------------------------------------------
// FSP rejection and selection

struct FspRejectConfig {
  std::size_t tail_cells = 10;
  double threshold = 0.006;
};

struct FspRejectResult {
  std::vector<std::size_t> kept;     // ascending id
  std::vector<std::size_t> skipped;  // no profile
  std::vector<std::string> warnings;
};

/// Keeps candidates whose mean distance over the last `tail_cells` cells is
/// <= threshold. Throws when tail_cells is 0 or exceeds `num_cells`.
FspRejectResult fsp_reject(std::span<const CandidateReport> reports, std::size_t num_cells,
                           const FspRejectConfig& cfg = {});
double fsp_tail_mean(const std::vector<double>& profile, std::size_t tail_cells);

struct SelectConfig {
  double min_density = 0.5;       // inclusive, literal density
  double min_direct_prop = 0.5;   // exclusive
};

struct Selection {
  std::string name;
  std::optional<CandidateReport> best;  // nullopt: nothing survived
};

/// Density and direct-proportion filters, then the highest robust_acc per
/// budget class (ties: lower id). Returns robnet-small/medium/large in that
/// order. Requires finetuned cell-based reports.
std::vector<Selection> select_robnets(std::span<const CandidateReport> reports, const SelectConfig& cfg = {});

/// Highest robust_acc among finetuned reports whose id is in `allowed`.
Selection select_best(std::span<const CandidateReport> reports, std::span<const std::size_t> allowed,
                      std::string name);

nlohmann::ordered_json selections_to_json(std::span<const Selection> selections);

}  // namespace robnas::analysis
