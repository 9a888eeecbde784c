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

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "robnas/adversary.hpp"
#include "robnas/analysis.hpp"
#include "robnas/data.hpp"
#include "robnas/supernet.hpp"

namespace robnas {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DatasetSpec {
  /// "synth" or "cifar10".
  std::string kind = "synth";
  /// CIFAR-10 binary batches, comma separated.
  std::vector<std::filesystem::path> train_files;
  std::vector<std::filesystem::path> test_files;
  SynthConfig synth;
  /// Synthetic test split size; 0 means no test split.
  std::size_t test_n = 0;
  double val_fraction = 0.1;
  /// Keep only the first k training records; 0 keeps all.
  std::size_t train_limit = 0;
};

/// Everything that determines a run. Serialises to flat "key = value" text;
/// see config_keys() for the vocabulary.
struct ExperimentConfig {
  DatasetSpec data;
  net::MacroConfig macro;
  int nodes = 4;
  arch::SearchMode mode = arch::SearchMode::CellBased;

  /// Supernet robust training; its attack is also the finetuning attack.
  adv::TrainConfig train;
  std::size_t sample_count = 20;
  int finetune_epochs = adv::kDefaultFinetuneEpochs;
  /// 0 reuses train.lr.
  double finetune_lr = 0.0;

  std::vector<adv::AttackKind> eval_attacks{adv::AttackKind::Pgd};
  adv::AttackConfig eval_attack;
  std::size_t eval_batch_size = 256;

  /// Held-out examples for FSP profiles; 0 skips the stage.
  std::size_t fsp_batch = 256;
  analysis::FspRejectConfig fsp;
  analysis::SelectConfig select;
  /// 0 labels the top and bottom 30% of reports.
  std::size_t probe_top_k = 0;
  std::size_t probe_bottom_k = 0;
  analysis::ProbeConfig probe;
  std::size_t hist_bins = 10;

  unsigned threads = 1;
  std::uint64_t seed = 0;

  adv::TrainConfig finetune_config() const;
  /// Cross-field checks; macro image geometry is filled in from the data.
  void validate() const;
};

struct ConfigKey {
  std::string name;
  std::string help;
};

/// Every accepted key, in serialisation order.
const std::vector<ConfigKey>& config_keys();

/// Throws ConfigError naming the key for unknown keys or malformed values.
void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value);
std::string get_config_value(const ExperimentConfig& cfg, std::string_view key);

/// "key = value" lines; '#' starts a comment. Errors carry "source:line".
ExperimentConfig parse_config(std::string_view text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);
/// All keys with their current values; parse_config(to_text(c)) == c.
std::string config_to_text(const ExperimentConfig& cfg);

}  // namespace robnas
