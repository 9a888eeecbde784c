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

// robnas: command-line driver for the search / finetune / analysis pipeline.
//
//   robnas pipeline --config configs/desk.cfg --out runs/desk
//   robnas sample --config configs/desk.cfg --count 20 --seed 7 --out runs/s7
//   robnas evaluate --config configs/desk.cfg --out runs/desk --eval_epsilon 0

#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "robnas/pipeline.hpp"

namespace {

using robnas::ExperimentConfig;
using robnas::pipeline::Runner;

struct Stage {
  const char* name;
  const char* help;
  void (Runner::*run)();
};

const Stage kStages[] = {
    {"train-supernet", "robust supernet training (writes supernet.ckpt)", &Runner::train_supernet},
    {"sample", "sample candidate architectures (writes genotypes.jsonl)", &Runner::sample},
    {"fsp", "FSP distance profiles without finetuning (writes fsp.csv)", &Runner::fsp},
    {"finetune", "adversarially finetune every candidate (writes finetune.csv)", &Runner::finetune},
    {"evaluate", "white-box attacks on finetuned candidates (writes evaluation.csv)", &Runner::evaluate},
    {"report", "assemble candidate reports (writes reports.jsonl)", &Runner::report},
    {"analyze", "histogram, correlations and linear probe", &Runner::analyze},
    {"select", "apply the selection recipe (writes selections.json)", &Runner::select},
    {"pipeline", "run every stage in order", &Runner::run_all},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust architecture search lab"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string out_dir = "robnas_out";
  std::uint64_t seed = 0;
  std::vector<std::string> sets;
  bool quiet = false;
  app.add_option("--config", config_path, "flat key = value config file")->option_text("PATH");
  auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides the config)")->option_text("U64");
  app.add_option("--out", out_dir, "artifact directory")->option_text("DIR");
  app.add_option("--set", sets, "config override key=value (repeatable)")->option_text("KEY=VALUE");
  app.add_flag("--quiet", quiet, "no progress output");

  std::map<std::string, std::string> values;
  std::vector<std::pair<CLI::App*, std::vector<std::pair<std::string, CLI::Option*>>>> key_opts;
  auto add_key_options = [&](CLI::App* sub) {
    std::vector<std::pair<std::string, CLI::Option*>> opts;
    for (const auto& k : robnas::config_keys()) {
      if (k.name == "seed") continue;
      opts.emplace_back(k.name, sub->add_option("--" + k.name, values[k.name], k.help)->group("Config overrides"));
    }
    key_opts.emplace_back(sub, std::move(opts));
  };

  std::map<std::string, CLI::App*> subs;
  for (const auto& st : kStages) {
    subs[st.name] = app.add_subcommand(st.name, st.help)->fallthrough();
    add_key_options(subs[st.name]);
  }
  std::size_t count = 0;
  auto* count_opt = subs["sample"]->add_option("--count", count, "alias for --sample_count");
  auto* attack_cmd = app.add_subcommand("attack", "one attack on one candidate, per-example CSV")->fallthrough();
  std::size_t attack_id = 0;
  std::string attack_kind = "pgd";
  attack_cmd->add_option("--id", attack_id, "candidate id")->required();
  attack_cmd->add_option("--kind", attack_kind, "fgsm, pgd or mi-fgsm");
  add_key_options(attack_cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : robnas::load_config(config_path);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw robnas::ConfigError("--set expects key=value, got '" + s + "'");
      robnas::set_config_value(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
    for (const auto& [sub, opts] : key_opts) {
      if (!sub->parsed()) continue;
      for (const auto& [key, opt] : opts) {
        if (opt->count() > 0) robnas::set_config_value(cfg, key, values[key]);
      }
    }
    if (count_opt->count() > 0) cfg.sample_count = count;
    if (seed_opt->count() > 0) cfg.seed = seed;

    robnas::pipeline::Logger log;
    if (!quiet) log = [](const std::string& m) { std::cerr << m << std::endl; };
    Runner runner(std::move(cfg), out_dir, log);

    if (attack_cmd->parsed()) {
      runner.attack(attack_id, robnas::adv::parse_attack(attack_kind));
      return 0;
    }
    for (const auto& st : kStages) {
      if (subs[st.name]->parsed()) (runner.*st.run)();
    }
  } catch (const std::exception& e) {
    std::cerr << "robnas: error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
