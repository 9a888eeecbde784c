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

#include "robnas/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "robnas/text.hpp"

namespace robnas {

namespace {

template <class T>
T parse_integer(std::string_view s) {
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("expected an integer, got '" + std::string(s) + "'");
  }
  return v;
}

double parse_real_atom(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("expected a number, got '" + std::string(s) + "'");
  }
  return v;
}

// Accepts "0.5" and fractions such as "8/255".
double parse_real(std::string_view s) {
  const auto slash = s.find('/');
  if (slash == std::string_view::npos) return parse_real_atom(s);
  return parse_real_atom(trim(s.substr(0, slash))) / parse_real_atom(trim(s.substr(slash + 1)));
}

bool parse_bool(std::string_view s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("expected true or false, got '" + std::string(s) + "'");
}

std::vector<std::string> parse_list(std::string_view s) {
  if (trim(s).empty() || s == "none") return {};
  return split(s, ',');
}

template <class T>
std::string join(const std::vector<T>& items, const std::function<std::string(const T&)>& fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + fmt(items[i]);
  return out;
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

struct Entry {
  ConfigKey key;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define SIZE_KEY(name, field, help)                                                                 \
  Entry {                                                                                           \
    {name, help}, [](ExperimentConfig& c, std::string_view v) { c.field = parse_integer<std::size_t>(v); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.field); }                           \
  }
#define INT_KEY(name, field, help)                                                                   \
  Entry {                                                                                            \
    {name, help}, [](ExperimentConfig& c, std::string_view v) { c.field = parse_integer<int>(v); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.field); }                            \
  }
#define REAL_KEY(name, field, help)                                                           \
  Entry {                                                                                     \
    {name, help}, [](ExperimentConfig& c, std::string_view v) { c.field = parse_real(v); }, \
        [](const ExperimentConfig& c) { return format_number(c.field); }                      \
  }
#define BOOL_KEY(name, field, help)                                                           \
  Entry {                                                                                     \
    {name, help}, [](ExperimentConfig& c, std::string_view v) { c.field = parse_bool(v); }, \
        [](const ExperimentConfig& c) { return fmt_bool(c.field); }                           \
  }

std::vector<std::filesystem::path> parse_paths(std::string_view v) {
  std::vector<std::filesystem::path> out;
  for (const auto& s : parse_list(v)) out.emplace_back(s);
  return out;
}

std::string fmt_paths(const std::vector<std::filesystem::path>& ps) {
  return join<std::filesystem::path>(ps, [](const auto& p) { return p.string(); });
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      {{"dataset", "synth or cifar10"},
       [](ExperimentConfig& c, std::string_view v) {
         if (v != "synth" && v != "cifar10") throw ConfigError("expected synth or cifar10, got '" + std::string(v) + "'");
         c.data.kind = std::string(v);
       },
       [](const ExperimentConfig& c) { return c.data.kind; }},
      {{"train_files", "CIFAR-10 binary training batches, comma separated"},
       [](ExperimentConfig& c, std::string_view v) { c.data.train_files = parse_paths(v); },
       [](const ExperimentConfig& c) { return fmt_paths(c.data.train_files); }},
      {{"test_files", "CIFAR-10 binary test batches, comma separated"},
       [](ExperimentConfig& c, std::string_view v) { c.data.test_files = parse_paths(v); },
       [](const ExperimentConfig& c) { return fmt_paths(c.data.test_files); }},
      SIZE_KEY("synth_n", data.synth.n, "synthetic training examples"),
      SIZE_KEY("synth_classes", data.synth.classes, "synthetic classes"),
      SIZE_KEY("synth_channels", data.synth.channels, "synthetic image channels"),
      SIZE_KEY("synth_size", data.synth.size, "synthetic image side length"),
      REAL_KEY("synth_amplitude", data.synth.amplitude, "synthetic blob contrast"),
      REAL_KEY("synth_noise", data.synth.noise, "synthetic pixel noise sigma"),
      SIZE_KEY("test_n", data.test_n, "synthetic test examples (0: none)"),
      REAL_KEY("val_fraction", data.val_fraction, "share of training data held out for validation"),
      SIZE_KEY("train_limit", data.train_limit, "use only the first k training records (0: all)"),

      SIZE_KEY("cells", macro.cells, "number of cells L"),
      SIZE_KEY("stem_channels", macro.stem_channels, "stem width C0"),
      {{"reductions", "cells followed by a reduction block, comma separated, 'default' or 'none'"},
       [](ExperimentConfig& c, std::string_view v) {
         if (v == "default") {
           c.macro.reductions.reset();
           return;
         }
         std::vector<std::size_t> r;
         for (const auto& s : parse_list(v)) r.push_back(parse_integer<std::size_t>(s));
         c.macro.reductions = r;
       },
       [](const ExperimentConfig& c) -> std::string {
         if (!c.macro.reductions) return "default";
         if (c.macro.reductions->empty()) return "none";
         return join<std::size_t>(*c.macro.reductions, [](std::size_t v) { return std::to_string(v); });
       }},
      INT_KEY("nodes", nodes, "intermediate nodes per cell"),
      {{"mode", "cell-based or cell-free"},
       [](ExperimentConfig& c, std::string_view v) {
         try {
           c.mode = arch::parse_mode(v);
         } catch (const std::exception& e) {
           throw ConfigError(e.what());
         }
       },
       [](const ExperimentConfig& c) { return std::string(arch::mode_name(c.mode)); }},

      INT_KEY("epochs", train.epochs, "supernet training epochs"),
      REAL_KEY("lr", train.lr, "SGD learning rate"),
      {{"lr_decay_epochs", "epochs at which the learning rate is multiplied by lr_decay_factor"},
       [](ExperimentConfig& c, std::string_view v) {
         c.train.lr_decay_epochs.clear();
         for (const auto& s : parse_list(v)) c.train.lr_decay_epochs.push_back(parse_integer<int>(s));
       },
       [](const ExperimentConfig& c) {
         return join<int>(c.train.lr_decay_epochs, [](int v) { return std::to_string(v); });
       }},
      REAL_KEY("lr_decay_factor", train.lr_decay_factor, "learning rate decay factor"),
      REAL_KEY("momentum", train.momentum, "SGD momentum"),
      SIZE_KEY("batch_size", train.batch_size, "training batch size"),
      REAL_KEY("epsilon", train.attack.epsilon, "training PGD radius (l-inf)"),
      REAL_KEY("step_size", train.attack.step_size, "training PGD step"),
      INT_KEY("iterations", train.attack.iterations, "training PGD iterations"),
      BOOL_KEY("random_start", train.attack.random_start, "training PGD random start"),

      SIZE_KEY("sample_count", sample_count, "architectures sampled from the supernet"),
      INT_KEY("finetune_epochs", finetune_epochs, "adversarial finetuning epochs per candidate"),
      REAL_KEY("finetune_lr", finetune_lr, "finetuning learning rate (0: use lr)"),

      {{"eval_attacks", "attacks run by the evaluate stage: fgsm, pgd, mi-fgsm"},
       [](ExperimentConfig& c, std::string_view v) {
         c.eval_attacks.clear();
         for (const auto& s : parse_list(v)) {
           try {
             c.eval_attacks.push_back(adv::parse_attack(s));
           } catch (const std::exception& e) {
             throw ConfigError(e.what());
           }
         }
       },
       [](const ExperimentConfig& c) {
         return join<adv::AttackKind>(c.eval_attacks, [](adv::AttackKind k) { return adv::attack_name(k); });
       }},
      REAL_KEY("eval_epsilon", eval_attack.epsilon, "evaluation attack radius"),
      REAL_KEY("eval_step_size", eval_attack.step_size, "evaluation attack step"),
      INT_KEY("eval_iterations", eval_attack.iterations, "evaluation attack iterations"),
      BOOL_KEY("eval_random_start", eval_attack.random_start, "evaluation PGD random start"),
      REAL_KEY("eval_momentum", eval_attack.momentum, "MI-FGSM decay factor"),
      SIZE_KEY("eval_batch_size", eval_batch_size, "evaluation batch size"),

      SIZE_KEY("fsp_batch", fsp_batch, "held-out examples for FSP profiles (0: skip)"),
      SIZE_KEY("fsp_tail", fsp.tail_cells, "trailing cells averaged for FSP rejection"),
      REAL_KEY("fsp_threshold", fsp.threshold, "FSP rejection threshold"),
      REAL_KEY("select_min_density", select.min_density, "minimum architecture density (inclusive)"),
      REAL_KEY("select_min_direct", select.min_direct_prop, "direct convolution proportion must exceed this"),
      SIZE_KEY("probe_top_k", probe_top_k, "reports labelled +1 for the probe (0: 30%)"),
      SIZE_KEY("probe_bottom_k", probe_bottom_k, "reports labelled -1 for the probe (0: 30%)"),
      INT_KEY("probe_epochs", probe.epochs, "probe SGD passes"),
      REAL_KEY("probe_lr", probe.lr, "probe SGD learning rate"),
      SIZE_KEY("hist_bins", hist_bins, "robust accuracy histogram bins"),

      {{"threads", "worker threads for finetune and evaluate"},
       [](ExperimentConfig& c, std::string_view v) { c.threads = parse_integer<unsigned>(v); },
       [](const ExperimentConfig& c) { return std::to_string(c.threads); }},
      {{"seed", "master seed"},
       [](ExperimentConfig& c, std::string_view v) { c.seed = parse_integer<std::uint64_t>(v); },
       [](const ExperimentConfig& c) { return std::to_string(c.seed); }},
  };
  return table;
}

#undef SIZE_KEY
#undef INT_KEY
#undef REAL_KEY
#undef BOOL_KEY

const Entry& find_entry(std::string_view key) {
  for (const auto& e : entries()) {
    if (e.key.name == key) return e;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

adv::TrainConfig ExperimentConfig::finetune_config() const {
  adv::TrainConfig t = train;
  t.epochs = finetune_epochs;
  if (finetune_lr > 0.0) t.lr = finetune_lr;
  t.lr_decay_epochs.clear();
  return t;
}

void ExperimentConfig::validate() const {
  try {
    train.validate();
    eval_attack.validate();
    macro.validate();
    finetune_config().validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (nodes < 1) throw ConfigError("nodes must be at least 1");
  if (finetune_epochs < 0) throw ConfigError("finetune_epochs must be non-negative");
  if (finetune_lr < 0.0) throw ConfigError("finetune_lr must be non-negative");
  if (sample_count == 0) throw ConfigError("sample_count must be positive");
  if (eval_batch_size == 0) throw ConfigError("eval_batch_size must be positive");
  if (!(data.val_fraction > 0.0 && data.val_fraction < 1.0)) throw ConfigError("val_fraction must lie in (0, 1)");
  if (data.kind == "cifar10" && data.train_files.empty()) throw ConfigError("dataset cifar10 needs train_files");
  if (hist_bins == 0) throw ConfigError("hist_bins must be positive");
  if (threads == 0) throw ConfigError("threads must be positive");
  if (probe.epochs < 0 || !(probe.lr > 0.0)) throw ConfigError("probe_epochs must be >= 0 and probe_lr > 0");
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& e : entries()) k.push_back(e.key);
    return k;
  }();
  return keys;
}

void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  const Entry& e = find_entry(key);
  try {
    e.set(cfg, trim(value));
  } catch (const ConfigError& err) {
    throw ConfigError("key '" + std::string(key) + "': " + err.what());
  }
}

std::string get_config_value(const ExperimentConfig& cfg, std::string_view key) { return find_entry(key).get(cfg); }

ExperimentConfig parse_config(std::string_view text, const std::string& source) {
  ExperimentConfig cfg;
  std::size_t line_no = 0, start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value'");
    try {
      set_config_value(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string config_to_text(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& e : entries()) out += e.key.name + " = " + e.get(cfg) + "\n";
  return out;
}

}  // namespace robnas
