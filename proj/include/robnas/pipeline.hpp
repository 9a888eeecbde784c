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
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "robnas/config.hpp"

namespace robnas::pipeline {

// Artifacts, relative to the output directory. Each stage writes only its own.
//
//   train-supernet  supernet.ckpt, supernet_train.csv
//   sample          genotypes.jsonl
//   fsp             fsp.csv
//   finetune        finetune.csv, candidates/<id>.ckpt, verdicts/finetune_<id>.csv
//   evaluate        evaluation.csv, verdicts/<attack>_<id>.csv
//   report          reports.jsonl
//   analyze         histogram.csv, correlations.csv, scatter_<metric>.csv,
//                   probe.csv, probe_weights.csv, analysis.txt
//   select          selections.json
//   attack          attack_<kind>_<id>.csv
inline constexpr const char* kSupernetCkpt = "supernet.ckpt";
inline constexpr const char* kSupernetCsv = "supernet_train.csv";
inline constexpr const char* kGenotypes = "genotypes.jsonl";
inline constexpr const char* kFspCsv = "fsp.csv";
inline constexpr const char* kFinetuneCsv = "finetune.csv";
inline constexpr const char* kEvaluationCsv = "evaluation.csv";
inline constexpr const char* kReports = "reports.jsonl";
inline constexpr const char* kHistogram = "histogram.csv";
inline constexpr const char* kSelections = "selections.json";

/// Missing prerequisite artifact.
class ArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Splits {
  Dataset train;
  Dataset val;
  std::optional<Dataset> test;
};

/// Loads or synthesises the data and applies the seeded validation split.
/// Fills the image geometry and class count of `cfg.macro`.
Splits load_splits(ExperimentConfig& cfg);

using Logger = std::function<void(const std::string&)>;

class Runner {
 public:
  Runner(ExperimentConfig cfg, std::filesystem::path out, Logger log = {});

  const ExperimentConfig& config() const { return cfg_; }
  const std::filesystem::path& out() const { return out_; }

  void train_supernet();
  void sample();
  void fsp();
  void finetune();
  void evaluate();
  void report();
  void analyze();
  void select();
  /// One attack on one candidate, per-example rows with the l-inf distance.
  void attack(std::size_t id, adv::AttackKind kind);
  /// Every stage in order; fsp is skipped when fsp_batch is 0.
  void run_all();

 private:
  const Splits& splits();
  std::filesystem::path need(const std::string& name) const;
  net::Supernet load_supernet() const;
  std::vector<arch::ArchParams> load_genotypes() const;
  void say(const std::string& msg) const;

  ExperimentConfig cfg_;
  std::filesystem::path out_;
  Logger log_;
  std::optional<Splits> splits_;
};

/// Runs fn(i) for i in [0, n) on up to `threads` workers. The first exception
/// is rethrown after all workers stop.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace robnas::pipeline
