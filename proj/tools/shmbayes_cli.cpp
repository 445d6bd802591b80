// shmbayes: run experiments from a config file and/or command-line flags.
//
//   shmbayes active --config configs/active.ini --seed 1,2,3 --out results/active
//   shmbayes gen population --seed 7 --out-dir data
//
// Exit status: 0 success, 1 run failure, 2 config error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "shmbayes/harness/experiments.hpp"

namespace {

using shmbayes::harness::ConfigError;
using shmbayes::harness::ExperimentConfig;

// Flag -> (section, key); values go through the config parser so both
// routes share one set of checks.
struct Override {
  std::string section, key, value;
};

void add_override(CLI::App* app, std::vector<Override>& out, const std::string& flag, const std::string& section,
                  const std::string& key, const std::string& help) {
  out.push_back({section, key, ""});
  // The vector is fully populated before parsing, so indices stay valid.
  const std::size_t i = out.size() - 1;
  app->add_option_function<std::string>(flag, [&out, i](const std::string& v) { out[i].value = v; }, help);
}

void print_summary(const shmbayes::harness::ResultBundle& b) {
  std::printf("%-12s %-20s %4s %14s %14s\n", "group", "metric", "n", "mean", "se");
  for (const auto& a : b.aggregates)
    std::printf("%-12s %-20s %4zu %14.6g %14.6g\n", a.group.c_str(), a.metric.c_str(), a.n, a.mean, a.se);
  std::printf("%zu files written, %.2f s\n", b.files.size(), b.runtime_seconds);
  for (const auto& f : b.failures) std::fprintf(stderr, "failed: %s\n", f.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian SHM experiments"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir, seeds, source;
  app.add_option("--config", config_path, "Experiment config file")->check(CLI::ExistingFile);
  app.add_option("--out,--out-dir", out_dir, "Output directory");
  app.add_option("--seed", seeds, "Comma-separated seed list");
  app.add_option("--source", source, "'synthetic' or a labelled CSV file");

  std::vector<Override> ov;
  ov.reserve(32);

  auto* gen = app.add_subcommand("gen", "Write a synthetic dataset as CSV");
  ov.push_back({"gen", "kind", ""});
  gen->add_option_function<std::string>(
         "kind", [&ov](const std::string& v) { ov[0].value = v; }, "ae | z24 | population")
      ->check(CLI::IsMember({"ae", "z24", "population"}));
  add_override(gen, ov, "--ae-per-class", "gen", "ae_per_class", "Points per class for the AE-like set");

  auto* active = app.add_subcommand("active", "Active versus passive learning on a stream");
  add_override(active, ov, "--budget-fraction", "active", "budget_fraction", "Fraction of each batch queried");
  add_override(active, ov, "--batch-size", "active", "batch_size", "Stream batch size");
  add_override(active, ov, "--strategy", "active", "strategy", "entropy | likelihood | split | random");
  add_override(active, ov, "--baseline", "active", "baseline", "Comparison strategy (default random)");

  auto* semisup = app.add_subcommand("semisup", "Semi-supervised EM versus supervised MAP");
  add_override(semisup, ov, "--labelled-fraction", "semisup", "fractions", "Comma-separated labelled fractions");
  add_override(semisup, ov, "--tol", "semisup", "tol", "EM tolerance");
  add_override(semisup, ov, "--max-iters", "semisup", "max_iters", "EM iteration cap");

  auto* dp = app.add_subcommand("dp", "Streaming DP clustering with novelty alarms");
  add_override(dp, ov, "--alpha", "dp", "alpha", "DP dispersion");
  add_override(dp, ov, "--sweeps", "dp", "sweeps", "Gibbs sweeps per streamed batch");
  add_override(dp, ov, "--alarm-threshold", "dp", "alarm_threshold", "Cluster size that raises an alarm");
  add_override(dp, ov, "--onset", "dp", "onset", "Stream index of the damage onset");

  auto* kb = app.add_subcommand("kbtl", "Transfer versus single-task KBTL");
  add_override(kb, ov, "--subspace-dim", "kbtl", "subspace_dim", "Shared subspace dimension R");
  add_override(kb, ov, "--margin", "kbtl", "margin", "Margin parameter");
  add_override(kb, ov, "--max-iters", "kbtl", "max_iters", "Variational iteration cap");

  auto* ev = app.add_subcommand("eval", "Metrics report for a predictions CSV");
  add_override(ev, ov, "--predictions", "eval", "predictions", "CSV with y_true,y_pred or y_true,cluster");
  add_override(ev, ov, "--num-classes", "eval", "num_classes", "Number of classes (0: largest label)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const std::string experiment = app.get_subcommands().front()->get_name();
  ExperimentConfig cfg;
  try {
    if (!config_path.empty()) {
      std::ifstream in(config_path, std::ios::binary);
      cfg = shmbayes::harness::parse_config_stream(in, experiment);
    } else {
      cfg.experiment = experiment;
    }
    if (!seeds.empty()) shmbayes::harness::set_value(cfg, "", "seeds", seeds);
    if (!out_dir.empty()) shmbayes::harness::set_value(cfg, "", "out_dir", out_dir);
    if (!source.empty()) shmbayes::harness::set_value(cfg, "", "source", source);
    for (const auto& o : ov)
      if (!o.value.empty()) shmbayes::harness::set_value(cfg, o.section, o.key, o.value);
    shmbayes::harness::validate(cfg);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s%s\n", config_path.empty() ? "" : (config_path + ": ").c_str(), e.what());
    return 2;
  }

  try {
    const auto bundle = shmbayes::harness::run_experiment(cfg);
    print_summary(bundle);
    return bundle.ok() ? 0 : 1;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "run failed: %s\n", e.what());
    return 1;
  }
}
