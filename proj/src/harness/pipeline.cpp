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

#include "robnas/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "robnas/genotype.hpp"
#include "robnas/text.hpp"

namespace robnas::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Dataset concat(const std::vector<Dataset>& parts, const std::string& split) {
  Dataset out = parts.at(0);
  out.split = split;
  if (parts.size() == 1) return out;
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.image_shape() != parts[0].image_shape()) throw DataError("dataset parts have different image shapes");
    n += p.size();
  }
  const Shape img = parts[0].image_shape();
  out.images = Tensor(Shape{n, img[0], img[1], img[2]});
  out.labels.clear();
  float* dst = out.images.raw();
  for (const auto& p : parts) {
    dst = std::copy(p.images.raw(), p.images.raw() + p.images.numel(), dst);
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
  }
  return out;
}

Dataset load_cifar_files(const std::vector<fs::path>& files, const std::string& split) {
  std::vector<Dataset> parts;
  for (const auto& f : files) parts.push_back(load_cifar10_binary(f));
  return concat(parts, split);
}

Dataset head(const Dataset& d, std::size_t n, const std::string& split) {
  std::vector<std::size_t> idx(std::min(n, d.size()));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return d.subset(idx, split);
}

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name, const fs::path& src) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ArtifactError(src.string() + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  }
};

Csv read_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  Csv csv;
  std::string line;
  if (!std::getline(in, line)) throw ArtifactError(path.string() + ": empty file");
  csv.header = split(line, ',');
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    csv.rows.push_back(split(line, ','));
    if (csv.rows.back().size() != csv.header.size()) {
      throw ArtifactError(path.string() + ": row " + std::to_string(csv.rows.size()) + " has " +
                          std::to_string(csv.rows.back().size()) + " fields, expected " +
                          std::to_string(csv.header.size()));
    }
  }
  return csv;
}

std::size_t to_size(const std::string& s) { return static_cast<std::size_t>(std::stoull(s)); }

std::string verdict_csv(const Dataset& data, const adv::EvalResult& r) {
  std::string out = "id,label,prediction_clean,prediction_adv\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    out += std::to_string(i) + "," + std::to_string(data.labels[i]) + "," + std::to_string(r.pred_clean[i]) + "," +
           std::to_string(r.pred_adv[i]) + "\n";
  }
  return out;
}

fs::path candidate_ckpt(const fs::path& out, std::size_t id) {
  return out / "candidates" / (std::to_string(id) + ".ckpt");
}

struct FinetuneRow {
  bool finetuned = false;
  adv::FinetuneResult result;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

// FSP profiles keyed by id, when fsp.csv exists.
std::map<std::size_t, std::vector<double>> read_fsp_profiles(const fs::path& path, std::size_t cells) {
  std::map<std::size_t, std::vector<double>> out;
  if (!fs::exists(path)) return out;
  const Csv csv = read_csv(path);
  const std::size_t id_col = csv.column("id", path);
  std::vector<std::size_t> cols;
  for (std::size_t l = 0; l < cells; ++l) cols.push_back(csv.column("cell" + std::to_string(l), path));
  for (const auto& row : csv.rows) {
    std::vector<double> p;
    for (std::size_t c : cols) p.push_back(std::stod(row[c]));
    out[to_size(row[id_col])] = std::move(p);
  }
  return out;
}

}  // namespace

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ArtifactError("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(std::max(1u, threads), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (!failed) {
        const std::size_t i = next++;
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
          failed = true;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

Splits load_splits(ExperimentConfig& cfg) {
  const DatasetSpec& spec = cfg.data;
  Dataset all;
  std::optional<Dataset> test;
  if (spec.kind == "synth") {
    SynthConfig sc = spec.synth;
    sc.n += spec.test_n;
    Rng rng(derive_seed(cfg.seed, Stage::Data, 0));
    const Dataset pool = synth_dataset(rng, sc);
    std::vector<std::size_t> idx(spec.synth.n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    all = pool.subset(idx, "train");
    if (spec.test_n > 0) {
      idx.resize(spec.test_n);
      std::iota(idx.begin(), idx.end(), spec.synth.n);
      test = pool.subset(idx, "test");
    }
  } else {
    all = load_cifar_files(spec.train_files, "train");
    if (!spec.test_files.empty()) test = load_cifar_files(spec.test_files, "test");
  }
  if (spec.train_limit > 0) all = head(all, spec.train_limit, "train");
  all.validate();
  Rng split_rng(derive_seed(cfg.seed, Stage::Data, 2));
  auto [train, val] = split_train_val(all, spec.val_fraction, split_rng);
  if (val.size() == 0 || train.size() == 0) throw ConfigError("validation split leaves an empty train or val set");
  cfg.macro.num_classes = all.num_classes;
  const Shape img = all.image_shape();
  cfg.macro.in_channels = img[0];
  cfg.macro.height = img[1];
  cfg.macro.width = img[2];
  return {std::move(train), std::move(val), std::move(test)};
}

Runner::Runner(ExperimentConfig cfg, fs::path out, Logger log)
    : cfg_(std::move(cfg)), out_(std::move(out)), log_(std::move(log)) {
  cfg_.validate();
  fs::create_directories(out_);
}

void Runner::say(const std::string& msg) const {
  if (log_) log_(msg);
}

const Splits& Runner::splits() {
  if (!splits_) {
    splits_ = load_splits(cfg_);
    cfg_.macro.validate();
  }
  return *splits_;
}

fs::path Runner::need(const std::string& name) const {
  const fs::path p = out_ / name;
  if (!fs::exists(p)) throw ArtifactError("missing artifact " + p.string() + " (run the stage that writes it first)");
  return p;
}

net::Supernet Runner::load_supernet() const {
  const fs::path p = need(kSupernetCkpt);
  Rng unused(0);
  net::Supernet net(cfg_.macro, arch::CellSpace(cfg_.nodes), unused);
  net.load(load_checkpoint(p));
  return net;
}

std::vector<arch::ArchParams> Runner::load_genotypes() const {
  const fs::path p = need(kGenotypes);
  std::istringstream in(read_text(p));
  std::vector<arch::ArchParams> out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      if (j.at("id").get<std::size_t>() != out.size()) throw ArtifactError("ids must be 0, 1, 2, ...");
      out.push_back(arch::genotype_from_json(j.at("genotype")));
      out.back().validate(cfg_.macro.cells);
    } catch (const std::exception& e) {
      throw ArtifactError(p.string() + " line " + std::to_string(out.size() + 1) + ": " + e.what());
    }
  }
  return out;
}

void Runner::train_supernet() {
  const Splits& s = splits();
  Stopwatch sw;
  Rng init(derive_seed(cfg_.seed, Stage::SupernetInit));
  net::Supernet net(cfg_.macro, arch::CellSpace(cfg_.nodes), init);
  say("train-supernet: " + std::to_string(net.parameter_count()) + " parameters, " + std::to_string(s.train.size()) +
      " training examples, " + std::to_string(cfg_.train.epochs) + " epochs");
  Rng rng(derive_seed(cfg_.seed, Stage::SupernetTrain));
  const adv::TrainHistory hist = adv::robust_search_train(net, s.train, cfg_.train, rng, cfg_.mode);
  save_checkpoint(out_ / kSupernetCkpt, net.checkpoint());
  std::string csv = adv::epoch_csv_header() + "\n";
  for (const auto& m : hist.epochs) csv += adv::epoch_csv_row(m) + "\n";
  write_text(out_ / kSupernetCsv, csv);
  for (const auto& m : hist.epochs) {
    say("  epoch " + std::to_string(m.epoch) + " loss " + fixed(m.loss, 4) + " clean " + fixed(m.clean_acc, 3) +
        " robust " + fixed(m.robust_acc, 3));
  }
  say("train-supernet: done in " + fixed(sw.seconds(), 1) + " s");
}

void Runner::sample() {
  Rng rng(derive_seed(cfg_.seed, Stage::Sample));
  const arch::CellSpace space(cfg_.nodes);
  std::string text;
  for (std::size_t i = 0; i < cfg_.sample_count; ++i) {
    const auto alpha = arch::sample_alpha(rng, space, cfg_.mode, cfg_.macro.cells);
    text += "{\"id\":" + std::to_string(i) + ",\"genotype\":" + arch::to_genotype_json(alpha) + "}\n";
  }
  write_text(out_ / kGenotypes, text);
  say("sample: " + std::to_string(cfg_.sample_count) + " architectures");
}

void Runner::fsp() {
  const Splits& s = splits();
  const net::Supernet net = load_supernet();
  const auto genotypes = load_genotypes();
  if (cfg_.fsp_batch == 0) throw ConfigError("fsp_batch is 0; the fsp stage is disabled");
  std::vector<std::size_t> idx(std::min(cfg_.fsp_batch, s.val.size()));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const Tensor x = s.val.gather_images(idx);
  const std::vector<int> y = s.val.gather_labels(idx);
  std::string csv = "id";
  for (std::size_t l = 0; l < cfg_.macro.cells; ++l) csv += ",cell" + std::to_string(l);
  csv += "\n";
  for (std::size_t id = 0; id < genotypes.size(); ++id) {
    const net::Network n = net::extract_subnetwork(net, genotypes[id]);
    Rng rng(derive_seed(cfg_.seed, Stage::Fsp, id));
    const Tensor x_adv = adv::pgd(n, x, y, cfg_.eval_attack, &rng);
    csv += std::to_string(id);
    for (double d : net::fsp_distance(n, x, x_adv)) csv += "," + format_number(d);
    csv += "\n";
  }
  write_text(out_ / kFspCsv, csv);
  say("fsp: profiles for " + std::to_string(genotypes.size()) + " candidates on " + std::to_string(idx.size()) +
      " held-out examples");
}

void Runner::finetune() {
  const Splits& s = splits();
  const net::Supernet net = load_supernet();
  const auto genotypes = load_genotypes();

  std::vector<bool> selected(genotypes.size(), true);
  if (cfg_.mode == arch::SearchMode::CellFree) {
    const auto profiles = read_fsp_profiles(need(kFspCsv), cfg_.macro.cells);
    std::vector<analysis::CandidateReport> reps;
    for (std::size_t id = 0; id < genotypes.size(); ++id) {
      reps.push_back(analysis::describe_candidate(id, genotypes[id]));
      if (auto it = profiles.find(id); it != profiles.end()) reps.back().fsp_profile = it->second;
    }
    const auto res = analysis::fsp_reject(reps, cfg_.macro.cells, cfg_.fsp);
    for (const auto& w : res.warnings) say("finetune: warning: " + w);
    std::fill(selected.begin(), selected.end(), false);
    for (std::size_t id : res.kept) selected[id] = true;
    say("finetune: fsp rejection keeps " + std::to_string(res.kept.size()) + " of " +
        std::to_string(genotypes.size()));
  }

  const adv::TrainConfig tc = cfg_.finetune_config();
  fs::create_directories(out_ / "candidates");
  std::vector<FinetuneRow> rows(genotypes.size());
  std::mutex log_mu;
  Stopwatch sw;
  parallel_for(genotypes.size(), cfg_.threads, [&](std::size_t id) {
    net::Network n = net::extract_subnetwork(net, genotypes[id]);
    Rng rng(derive_seed(cfg_.seed, Stage::Finetune, id));
    const int epochs = selected[id] ? cfg_.finetune_epochs : 0;
    rows[id].finetuned = epochs > 0;
    rows[id].result = adv::adversarial_finetune(n, s.train, s.val, tc, cfg_.eval_attack, rng, epochs);
    save_checkpoint(candidate_ckpt(out_, id), n.checkpoint());
    write_text(out_ / "verdicts" / ("finetune_" + std::to_string(id) + ".csv"), verdict_csv(s.val, rows[id].result.after));
    std::lock_guard lock(log_mu);
    say("finetune: candidate " + std::to_string(id) + " robust " + fixed(rows[id].result.before.robust_acc(), 3) +
        " -> " + fixed(rows[id].result.after.robust_acc(), 3));
  });

  std::string csv =
      "id,finetuned,total,clean_correct_before,robust_correct_before,clean_correct_after,robust_correct_after,"
      "clean_acc_before,robust_acc_before,clean_acc_after,robust_acc_after\n";
  std::string epochs_csv = "id," + adv::epoch_csv_header() + "\n";
  for (std::size_t id = 0; id < rows.size(); ++id) {
    const auto& b = rows[id].result.before;
    const auto& a = rows[id].result.after;
    csv += std::to_string(id) + "," + (rows[id].finetuned ? "true" : "false") + "," + std::to_string(a.total) + "," +
           std::to_string(b.clean_correct) + "," + std::to_string(b.robust_correct) + "," +
           std::to_string(a.clean_correct) + "," + std::to_string(a.robust_correct) + "," +
           format_number(b.clean_acc()) + "," + format_number(b.robust_acc()) + "," + format_number(a.clean_acc()) +
           "," + format_number(a.robust_acc()) + "\n";
    for (const auto& m : rows[id].result.history.epochs) {
      epochs_csv += std::to_string(id) + "," + adv::epoch_csv_row(m) + "\n";
    }
  }
  write_text(out_ / kFinetuneCsv, csv);
  write_text(out_ / "finetune_epochs.csv", epochs_csv);
  say("finetune: done in " + fixed(sw.seconds(), 1) + " s");
}

void Runner::evaluate() {
  const Splits& s = splits();
  const net::Supernet net = load_supernet();
  const auto genotypes = load_genotypes();
  const std::size_t k = cfg_.eval_attacks.size();
  std::vector<adv::EvalResult> results(genotypes.size() * k);
  parallel_for(genotypes.size(), cfg_.threads, [&](std::size_t id) {
    net::Network n = net::extract_subnetwork(net, genotypes[id]);
    n.load(load_checkpoint(need("candidates/" + std::to_string(id) + ".ckpt")));
    for (std::size_t a = 0; a < k; ++a) {
      Rng rng(derive_seed(cfg_.seed, Stage::Evaluate, id * 8 + a));
      results[id * k + a] = adv::evaluate(n, s.val, cfg_.eval_attacks[a], cfg_.eval_attack, cfg_.eval_batch_size, &rng);
      write_text(out_ / "verdicts" / (adv::attack_name(cfg_.eval_attacks[a]) + "_" + std::to_string(id) + ".csv"),
                 verdict_csv(s.val, results[id * k + a]));
    }
  });
  std::string csv = "id,attack,epsilon,step_size,iterations,random_start,total,clean_correct,robust_correct,"
                    "clean_acc,robust_acc\n";
  const auto& e = cfg_.eval_attack;
  for (std::size_t id = 0; id < genotypes.size(); ++id) {
    for (std::size_t a = 0; a < k; ++a) {
      const auto& r = results[id * k + a];
      csv += std::to_string(id) + "," + adv::attack_name(cfg_.eval_attacks[a]) + "," + format_number(e.epsilon) + "," +
             format_number(e.step_size) + "," + std::to_string(e.iterations) + "," +
             (e.random_start ? "true" : "false") + "," + std::to_string(r.total) + "," +
             std::to_string(r.clean_correct) + "," + std::to_string(r.robust_correct) + "," +
             format_number(r.clean_acc()) + "," + format_number(r.robust_acc()) + "\n";
    }
  }
  write_text(out_ / kEvaluationCsv, csv);
  say("evaluate: " + std::to_string(genotypes.size()) + " candidates x " + std::to_string(k) + " attacks");
}

void Runner::report() {
  const auto genotypes = load_genotypes();
  const fs::path ft_path = need(kFinetuneCsv);
  const Csv ft = read_csv(ft_path);
  const auto profiles = read_fsp_profiles(out_ / kFspCsv, cfg_.macro.cells);
  const std::size_t c_id = ft.column("id", ft_path), c_ft = ft.column("finetuned", ft_path),
                    c_total = ft.column("total", ft_path), c_clean = ft.column("clean_correct_after", ft_path),
                    c_robust = ft.column("robust_correct_after", ft_path);
  std::vector<analysis::CandidateReport> reps;
  for (std::size_t id = 0; id < genotypes.size(); ++id) {
    reps.push_back(analysis::describe_candidate(id, genotypes[id]));
    if (auto it = profiles.find(id); it != profiles.end()) reps.back().fsp_profile = it->second;
  }
  std::vector<bool> seen(genotypes.size(), false);
  for (const auto& row : ft.rows) {
    const std::size_t id = to_size(row[c_id]);
    if (id >= reps.size()) throw ArtifactError(ft_path.string() + ": unknown candidate id " + row[c_id]);
    adv::EvalResult r;
    r.total = to_size(row[c_total]);
    r.clean_correct = to_size(row[c_clean]);
    r.robust_correct = to_size(row[c_robust]);
    analysis::set_accuracy(reps[id], r);
    reps[id].attack_kind = adv::AttackKind::Pgd;
    reps[id].attack = cfg_.eval_attack;
    reps[id].finetuned = row[c_ft] == "true";
    seen[id] = true;
  }
  for (std::size_t id = 0; id < seen.size(); ++id) {
    if (!seen[id]) throw ArtifactError(ft_path.string() + ": no row for candidate " + std::to_string(id));
    reps[id].validate(cfg_.macro.cells);
  }
  analysis::write_reports(out_ / kReports, reps);
  say("report: " + std::to_string(reps.size()) + " candidate reports");
}

void Runner::analyze() {
  const auto reps = analysis::read_reports(need(kReports));
  std::vector<double> robust;
  for (const auto& r : reps) robust.push_back(r.robust_acc);
  write_text(out_ / kHistogram, analysis::histogram_csv(robust, cfg_.hist_bins));

  std::string summary = "candidates: " + std::to_string(reps.size()) + "\n";
  std::string corr_csv = "x,y,n,r\n";
  using analysis::Metric;
  for (Metric x : {Metric::Density, Metric::DensityConnected, Metric::ConvCount, Metric::DirectProportion,
                   Metric::FspMean}) {
    const auto c = analysis::correlate(reps, x, Metric::RobustAcc);
    write_text(out_ / ("scatter_" + analysis::metric_name(x) + ".csv"), analysis::scatter_csv(c));
    corr_csv += analysis::metric_name(x) + ",robust_acc," + std::to_string(c.points.size()) + "," +
                (c.r ? format_number(*c.r) : std::string()) + "\n";
    summary += "pearson(" + analysis::metric_name(x) + ", robust_acc) = " + (c.r ? fixed(*c.r, 4) : "undefined") +
               " over " + std::to_string(c.points.size()) + " points\n";
  }
  write_text(out_ / "correlations.csv", corr_csv);
  if (reps.size() < 30) {
    summary += "note: fewer than 30 candidates; correlation signs are not statistically meaningful at this size\n";
  }

  if (const fs::path ft = out_ / kFinetuneCsv; fs::exists(ft)) {
    const Csv csv = read_csv(ft);
    const std::size_t b = csv.column("robust_acc_before", ft), a = csv.column("robust_acc_after", ft),
                      f = csv.column("finetuned", ft);
    double gain = 0.0;
    std::size_t n = 0;
    for (const auto& row : csv.rows) {
      if (row[f] != "true") continue;
      gain += std::stod(row[a]) - std::stod(row[b]);
      ++n;
    }
    if (n > 0) summary += "mean robust accuracy gain from finetuning: " + fixed(gain / n, 4) + " over " +
                          std::to_string(n) + " candidates\n";
  }

  const std::size_t default_k = reps.size() * 3 / 10;
  const std::size_t top = cfg_.probe_top_k ? cfg_.probe_top_k : default_k;
  const std::size_t bottom = cfg_.probe_bottom_k ? cfg_.probe_bottom_k : default_k;
  if (top == 0 || bottom == 0 || top + bottom > reps.size()) {
    summary += "probe: skipped (needs 1 <= top_k, bottom_k and top_k + bottom_k <= candidates)\n";
  } else {
    const auto labeled = analysis::label_extremes(reps, top, bottom);
    Rng rng(derive_seed(cfg_.seed, Stage::Probe));
    const auto res = analysis::train_probe(labeled, rng, cfg_.probe);
    write_text(out_ / "probe_weights.csv", analysis::probe_weights_csv(res.model, reps.front().alpha));
    write_text(out_ / "probe.csv", "labeled,top_k,bottom_k,epochs,lr,bias,train_accuracy\n" +
                                       std::to_string(labeled.size()) + "," + std::to_string(top) + "," +
                                       std::to_string(bottom) + "," + std::to_string(cfg_.probe.epochs) + "," +
                                       format_number(cfg_.probe.lr) + "," + format_number(res.model.b) + "," +
                                       format_number(res.train_accuracy) + "\n");
    summary += "probe: training accuracy " + fixed(res.train_accuracy, 4) + " on " + std::to_string(labeled.size()) +
               " labelled architectures\n";
  }
  write_text(out_ / "analysis.txt", summary);
  say("analyze:\n" + summary);
}

void Runner::select() {
  const auto reps = analysis::read_reports(need(kReports));
  std::vector<analysis::Selection> sel;
  if (cfg_.mode == arch::SearchMode::CellBased) {
    sel = analysis::select_robnets(reps, cfg_.select);
  } else {
    std::vector<std::size_t> ids;
    for (const auto& r : reps) ids.push_back(r.id);
    sel.push_back(analysis::select_best(reps, ids, "robnet-free"));
  }
  write_text(out_ / kSelections, analysis::selections_to_json(sel).dump(2) + "\n");
  for (const auto& s : sel) {
    say("select: " + s.name + " = " +
        (s.best ? "candidate " + std::to_string(s.best->id) + " (robust " + fixed(s.best->robust_acc, 3) + ")"
                : std::string("none")));
  }
}

void Runner::attack(std::size_t id, adv::AttackKind kind) {
  const Splits& s = splits();
  const net::Supernet net = load_supernet();
  const auto genotypes = load_genotypes();
  if (id >= genotypes.size()) throw ConfigError("candidate id " + std::to_string(id) + " out of range");
  net::Network n = net::extract_subnetwork(net, genotypes[id]);
  if (const fs::path p = candidate_ckpt(out_, id); fs::exists(p)) {
    n.load(load_checkpoint(p));
  } else {
    say("attack: " + p.string() + " not found; using inherited supernet weights");
  }
  Rng rng(derive_seed(cfg_.seed, Stage::Evaluate, (std::uint64_t{1} << 40) + id * 8 + static_cast<std::size_t>(kind)));
  std::string csv = "id,label,prediction_clean,prediction_adv,linf\n";
  std::size_t clean = 0, robust = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < s.val.size(); start += cfg_.eval_batch_size) {
    idx.resize(std::min(cfg_.eval_batch_size, s.val.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const Tensor x = s.val.gather_images(idx);
    const auto y = s.val.gather_labels(idx);
    const Tensor xa = adv::run_attack(kind, n, x, y, cfg_.eval_attack, &rng);
    const auto pc = predict_labels(n, x), pa = predict_labels(n, xa);
    const std::size_t per = x.numel() / idx.size();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      double linf = 0.0;
      for (std::size_t j = i * per; j < (i + 1) * per; ++j) linf = std::max(linf, std::abs(double(xa[j]) - x[j]));
      csv += std::to_string(idx[i]) + "," + std::to_string(y[i]) + "," + std::to_string(pc[i]) + "," +
             std::to_string(pa[i]) + "," + format_number(linf) + "\n";
      clean += pc[i] == y[i];
      robust += pa[i] == y[i];
    }
  }
  write_text(out_ / ("attack_" + adv::attack_name(kind) + "_" + std::to_string(id) + ".csv"), csv);
  const double total = static_cast<double>(s.val.size());
  say("attack: candidate " + std::to_string(id) + " " + adv::attack_name(kind) + " clean " + fixed(clean / total, 3) +
      " robust " + fixed(robust / total, 3));
}

void Runner::run_all() {
  Stopwatch sw;
  write_text(out_ / "config.txt", config_to_text(cfg_));
  train_supernet();
  sample();
  if (cfg_.fsp_batch > 0) fsp();
  finetune();
  evaluate();
  report();
  analyze();
  select();
  say("pipeline: done in " + fixed(sw.seconds(), 1) + " s");
}

}  // namespace robnas::pipeline
