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

#include "robnas/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "robnas/genotype.hpp"
#include "robnas/text.hpp"

namespace robnas::analysis {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

arch::BudgetClass parse_budget(const std::string& name) {
  for (auto c : {arch::BudgetClass::Small, arch::BudgetClass::Medium, arch::BudgetClass::Large}) {
    if (arch::budget_name(c) == name) return c;
  }
  throw AnalysisError("unknown budget class '" + name + "'");
}

template <class T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw AnalysisError(std::string("report: missing key '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw AnalysisError(std::string("report: key '") + key + "' has the wrong type");
  }
}

double ratio(std::size_t num, std::size_t den) {
  return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
}

// Robust accuracy descending, then id ascending.
bool more_robust(const CandidateReport& a, const CandidateReport& b) {
  if (a.robust_acc != b.robust_acc) return a.robust_acc > b.robust_acc;
  return a.id < b.id;
}

}  // namespace

void CandidateReport::validate(std::size_t num_cells) const {
  const std::string where = "report " + std::to_string(id);
  for (double a : {clean_acc, robust_acc}) {
    if (!(a >= 0.0 && a <= 1.0)) throw AnalysisError(where + ": accuracy " + format_number(a) + " outside [0, 1]");
  }
  if (clean_correct > eval_total || robust_correct > eval_total) {
    throw AnalysisError(where + ": correct count exceeds total");
  }
  if (fsp_profile && fsp_profile->size() != num_cells) {
    throw AnalysisError(where + ": fsp profile has " + std::to_string(fsp_profile->size()) + " cells, expected " +
                        std::to_string(num_cells));
  }
}

CandidateReport describe_candidate(std::size_t id, const arch::ArchParams& alpha) {
  alpha.validate();
  CandidateReport r;
  r.id = id;
  r.alpha = alpha;
  r.conv_count = arch::edge_stats(alpha).conv_total();
  r.density = arch::density(alpha, arch::DensityVariant::Literal);
  r.density_connected = arch::density(alpha, arch::DensityVariant::EdgeConnected);
  r.direct_conv_proportion = arch::direct_conv_proportion(alpha);
  if (alpha.mode == arch::SearchMode::CellBased) r.budget = arch::conv_budget_class(alpha).cls;
  return r;
}

void set_accuracy(CandidateReport& r, const adv::EvalResult& eval) {
  r.eval_total = eval.total;
  r.clean_correct = eval.clean_correct;
  r.robust_correct = eval.robust_correct;
  r.clean_acc = eval.clean_acc();
  r.robust_acc = eval.robust_acc();
}

ordered_json report_to_json(const CandidateReport& r) {
  ordered_json j;
  j["id"] = r.id;
  j["genotype"] = ordered_json::parse(arch::to_genotype_json(r.alpha));
  j["conv_count"] = r.conv_count;
  j["density"] = r.density;
  j["density_connected"] = r.density_connected;
  j["direct_conv_proportion"] = r.direct_conv_proportion ? ordered_json(*r.direct_conv_proportion) : ordered_json();
  j["budget_class"] = r.budget ? ordered_json(std::string(arch::budget_name(*r.budget))) : ordered_json();
  j["eval_total"] = r.eval_total;
  j["clean_correct"] = r.clean_correct;
  j["robust_correct"] = r.robust_correct;
  j["clean_acc"] = r.clean_acc;
  j["robust_acc"] = r.robust_acc;
  j["attack"] = {{"kind", adv::attack_name(r.attack_kind)},
                 {"epsilon", r.attack.epsilon},
                 {"step_size", r.attack.step_size},
                 {"iterations", r.attack.iterations},
                 {"random_start", r.attack.random_start},
                 {"momentum", r.attack.momentum}};
  j["fsp_profile"] = r.fsp_profile ? ordered_json(*r.fsp_profile) : ordered_json();
  j["finetuned"] = r.finetuned;
  return j;
}

CandidateReport report_from_json(const json& j) {
  if (!j.is_object()) throw AnalysisError("report: expected a JSON object");
  if (!j.contains("genotype")) throw AnalysisError("report: missing key 'genotype'");
  CandidateReport r = describe_candidate(field<std::size_t>(j, "id"), arch::genotype_from_json(j["genotype"]));
  if (field<std::size_t>(j, "conv_count") != r.conv_count) {
    throw AnalysisError("report " + std::to_string(r.id) + ": conv_count does not match the genotype");
  }
  const json& budget = j.contains("budget_class") ? j["budget_class"] : json();
  if (budget.is_string() != r.budget.has_value() ||
      (budget.is_string() && parse_budget(budget.get<std::string>()) != *r.budget)) {
    throw AnalysisError("report " + std::to_string(r.id) + ": budget_class does not match the genotype");
  }
  r.eval_total = field<std::size_t>(j, "eval_total");
  r.clean_correct = field<std::size_t>(j, "clean_correct");
  r.robust_correct = field<std::size_t>(j, "robust_correct");
  r.clean_acc = field<double>(j, "clean_acc");
  r.robust_acc = field<double>(j, "robust_acc");
  const json& a = j.contains("attack") ? j["attack"] : json();
  if (!a.is_object()) throw AnalysisError("report: 'attack' must be an object");
  r.attack_kind = adv::parse_attack(field<std::string>(a, "kind"));
  r.attack.epsilon = field<double>(a, "epsilon");
  r.attack.step_size = field<double>(a, "step_size");
  r.attack.iterations = field<int>(a, "iterations");
  r.attack.random_start = field<bool>(a, "random_start");
  r.attack.momentum = field<double>(a, "momentum");
  if (j.contains("fsp_profile") && !j["fsp_profile"].is_null()) {
    r.fsp_profile = field<std::vector<double>>(j, "fsp_profile");
  }
  r.finetuned = field<bool>(j, "finetuned");
  return r;
}

std::string to_jsonl(std::span<const CandidateReport> reports) {
  std::string out;
  for (const auto& r : reports) {
    out += report_to_json(r).dump();
    out += '\n';
  }
  return out;
}

std::vector<CandidateReport> parse_jsonl(std::string_view text) {
  std::vector<CandidateReport> out;
  std::size_t line_no = 0, start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    const std::string_view line = trim(text.substr(start, end - start));
    start = end + 1;
    if (line.empty()) continue;
    try {
      out.push_back(report_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw AnalysisError("reports line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_reports(const std::filesystem::path& path, std::span<const CandidateReport> reports) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << to_jsonl(reports);
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

std::vector<CandidateReport> read_reports(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return parse_jsonl(ss.str());
  } catch (const AnalysisError& e) {
    throw AnalysisError(path.string() + ": " + e.what());
  }
}

std::vector<LabeledArch> label_extremes(std::span<const CandidateReport> reports, std::size_t top_k,
                                        std::size_t bottom_k) {
  if (top_k + bottom_k > reports.size()) {
    throw AnalysisError("label_extremes: top_k + bottom_k = " + std::to_string(top_k + bottom_k) +
                        " exceeds " + std::to_string(reports.size()) + " reports");
  }
  std::set<std::size_t> ids;
  for (const auto& r : reports) {
    if (!ids.insert(r.id).second) throw AnalysisError("label_extremes: duplicate id " + std::to_string(r.id));
  }
  std::vector<const CandidateReport*> sorted;
  for (const auto& r : reports) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return more_robust(*a, *b); });
  std::vector<LabeledArch> out;
  auto emit = [&](const CandidateReport& r, int label) {
    const auto flat = r.alpha.flatten();
    out.push_back({r.id, std::vector<double>(flat.begin(), flat.end()), label});
  };
  for (std::size_t i = 0; i < top_k; ++i) emit(*sorted[i], +1);
  for (std::size_t i = sorted.size() - bottom_k; i < sorted.size(); ++i) emit(*sorted[i], -1);
  return out;
}

int ProbeModel::predict(std::span<const double> x) const {
  const double s = std::inner_product(w.begin(), w.end(), x.begin(), b);
  return (s > 0.0) - (s < 0.0);
}

ProbeResult train_probe(std::span<const LabeledArch> data, Rng& rng, const ProbeConfig& cfg) {
  if (data.empty()) throw AnalysisError("train_probe: no labeled architectures");
  const std::size_t dim = data[0].features.size();
  bool pos = false, neg = false;
  for (const auto& d : data) {
    if (d.features.size() != dim) throw AnalysisError("train_probe: feature length mismatch");
    if (d.label == 1) pos = true;
    else if (d.label == -1) neg = true;
    else throw AnalysisError("train_probe: labels must be +1 or -1");
  }
  if (!pos || !neg) throw AnalysisError("train_probe: both labels must be present");
  if (cfg.epochs < 0 || !(cfg.lr > 0.0)) throw AnalysisError("train_probe: invalid epochs or lr");

  ProbeResult res;
  res.model.w.assign(dim, 0.0);
  std::vector<std::size_t> order(data.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t i : order) {
      const auto& d = data[i];
      const double y = d.label;
      const double s = std::inner_product(res.model.w.begin(), res.model.w.end(), d.features.begin(), res.model.b);
      if (y * s < 1.0) {
        for (std::size_t k = 0; k < dim; ++k) res.model.w[k] += cfg.lr * y * d.features[k];
        res.model.b += cfg.lr * y;
      }
    }
  }
  std::size_t hits = 0;
  for (const auto& d : data) hits += res.model.predict(d.features) == d.label;
  res.train_accuracy = ratio(hits, data.size());
  return res;
}

std::string probe_weights_csv(const ProbeModel& model, const arch::ArchParams& shape) {
  const arch::CellSpace space = shape.space();
  const std::size_t per_cell = space.num_edges() * arch::kNumOps;
  if (model.w.size() != per_cell * shape.cells.size()) {
    throw AnalysisError("probe_weights_csv: weight length does not match the architecture shape");
  }
  std::string out = "edge,op,weight\n";
  for (std::size_t l = 0; l < shape.cells.size(); ++l) {
    const std::string prefix = shape.mode == arch::SearchMode::CellFree ? "cell" + std::to_string(l) + ":" : "";
    for (std::size_t e = 0; e < space.num_edges(); ++e) {
      for (std::size_t k = 0; k < arch::kNumOps; ++k) {
        out += "\"" + prefix + space.edge_label(e) + "\"," + (k == 0 ? "sep_conv_3x3" : "identity") + "," +
               format_number(model.w[l * per_cell + e * arch::kNumOps + k]) + "\n";
      }
    }
  }
  return out;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw AnalysisError("pearson: series lengths differ");
  const std::size_t n = x.size();
  if (n < 3) return std::nullopt;
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::string metric_name(Metric m) {
  switch (m) {
    case Metric::Density: return "density";
    case Metric::DensityConnected: return "density_connected";
    case Metric::ConvCount: return "conv_count";
    case Metric::DirectProportion: return "direct_conv_proportion";
    case Metric::CleanAcc: return "clean_acc";
    case Metric::RobustAcc: return "robust_acc";
    case Metric::FspMean: return "fsp_mean";
  }
  return "?";
}

Metric parse_metric(std::string_view name) {
  for (auto m : {Metric::Density, Metric::DensityConnected, Metric::ConvCount, Metric::DirectProportion,
                 Metric::CleanAcc, Metric::RobustAcc, Metric::FspMean}) {
    if (metric_name(m) == name) return m;
  }
  throw AnalysisError("unknown metric '" + std::string(name) + "'");
}

std::optional<double> metric_value(const CandidateReport& r, Metric m) {
  switch (m) {
    case Metric::Density: return r.density;
    case Metric::DensityConnected: return r.density_connected;
    case Metric::ConvCount: return static_cast<double>(r.conv_count);
    case Metric::DirectProportion: return r.direct_conv_proportion;
    case Metric::CleanAcc: return r.clean_acc;
    case Metric::RobustAcc: return r.robust_acc;
    case Metric::FspMean:
      if (!r.fsp_profile || r.fsp_profile->empty()) return std::nullopt;
      return fsp_tail_mean(*r.fsp_profile, r.fsp_profile->size());
  }
  return std::nullopt;
}

Correlation correlate(std::span<const CandidateReport> reports, Metric x, Metric y) {
  Correlation c{x, y, std::nullopt, {}};
  std::vector<double> xs, ys;
  for (const auto& r : reports) {
    const auto vx = metric_value(r, x), vy = metric_value(r, y);
    if (!vx || !vy) continue;
    c.points.emplace_back(r.id, *vx, *vy);
    xs.push_back(*vx);
    ys.push_back(*vy);
  }
  c.r = pearson(xs, ys);
  return c;
}

std::string scatter_csv(const Correlation& c) {
  std::string out = "id," + metric_name(c.x) + "," + metric_name(c.y) + "\n";
  for (const auto& [id, x, y] : c.points) {
    out += std::to_string(id) + "," + format_number(x) + "," + format_number(y) + "\n";
  }
  return out;
}

std::string histogram_csv(std::span<const double> values, std::size_t bins, double lo, double hi) {
  if (bins == 0 || !(hi > lo)) throw AnalysisError("histogram: need bins > 0 and hi > lo");
  std::vector<std::size_t> counts(bins, 0);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (double v : values) {
    if (!(v >= lo && v <= hi)) throw AnalysisError("histogram: value " + format_number(v) + " outside range");
    counts[std::min(bins - 1, static_cast<std::size_t>((v - lo) / width))]++;
  }
  std::string out = "bin_lo,bin_hi,count\n";
  for (std::size_t b = 0; b < bins; ++b) {
    auto edge = [&](std::size_t k) { return lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(bins); };
    out += format_number(edge(b)) + "," + format_number(edge(b + 1)) + "," + std::to_string(counts[b]) + "\n";
  }
  return out;
}

double fsp_tail_mean(const std::vector<double>& profile, std::size_t tail_cells) {
  if (tail_cells == 0 || tail_cells > profile.size()) {
    throw AnalysisError("fsp tail of " + std::to_string(tail_cells) + " cells on a profile of " +
                        std::to_string(profile.size()));
  }
  return std::accumulate(profile.end() - static_cast<std::ptrdiff_t>(tail_cells), profile.end(), 0.0) /
         static_cast<double>(tail_cells);
}

FspRejectResult fsp_reject(std::span<const CandidateReport> reports, std::size_t num_cells,
                           const FspRejectConfig& cfg) {
  if (cfg.tail_cells == 0 || cfg.tail_cells > num_cells) {
    throw AnalysisError("fsp_reject: tail_cells = " + std::to_string(cfg.tail_cells) + " must lie in [1, " +
                        std::to_string(num_cells) + "]");
  }
  FspRejectResult res;
  for (const auto& r : reports) {
    if (!r.fsp_profile) {
      res.skipped.push_back(r.id);
      res.warnings.push_back("candidate " + std::to_string(r.id) + " has no fsp profile; skipped");
      continue;
    }
    if (r.fsp_profile->size() != num_cells) {
      throw AnalysisError("fsp_reject: candidate " + std::to_string(r.id) + " profile has " +
                          std::to_string(r.fsp_profile->size()) + " cells, expected " + std::to_string(num_cells));
    }
    if (fsp_tail_mean(*r.fsp_profile, cfg.tail_cells) <= cfg.threshold) res.kept.push_back(r.id);
  }
  std::sort(res.kept.begin(), res.kept.end());
  std::sort(res.skipped.begin(), res.skipped.end());
  return res;
}

std::vector<Selection> select_robnets(std::span<const CandidateReport> reports, const SelectConfig& cfg) {
  std::vector<Selection> out = {{"robnet-small", {}}, {"robnet-medium", {}}, {"robnet-large", {}}};
  for (const auto& r : reports) {
    if (!r.finetuned) throw AnalysisError("select_robnets: report " + std::to_string(r.id) + " is not finetuned");
    if (!r.budget) throw AnalysisError("select_robnets: report " + std::to_string(r.id) + " has no budget class");
    if (!(r.density >= cfg.min_density)) continue;
    if (!r.direct_conv_proportion || !(*r.direct_conv_proportion > cfg.min_direct_prop)) continue;
    auto& slot = out[static_cast<std::size_t>(*r.budget)].best;
    if (!slot || more_robust(r, *slot)) slot = r;
  }
  return out;
}

Selection select_best(std::span<const CandidateReport> reports, std::span<const std::size_t> allowed,
                      std::string name) {
  Selection s{std::move(name), {}};
  for (const auto& r : reports) {
    if (!r.finetuned || std::find(allowed.begin(), allowed.end(), r.id) == allowed.end()) continue;
    if (!s.best || more_robust(r, *s.best)) s.best = r;
  }
  return s;
}

ordered_json selections_to_json(std::span<const Selection> selections) {
  ordered_json out = ordered_json::array();
  for (const auto& s : selections) {
    ordered_json e;
    e["name"] = s.name;
    e["report"] = s.best ? report_to_json(*s.best) : ordered_json();
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace robnas::analysis
