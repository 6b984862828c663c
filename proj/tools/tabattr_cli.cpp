// Command-line driver:
//
//   tabattr validate <config>
//   tabattr run <config> [--out DIR] [--seed N]
//   tabattr plotdata <run-dir>
//
// Exit codes: 0 success, 1 config/validation/io failure, 2 some experiment
// cells failed (details in the run manifest).

#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "tabattr/experiment.hpp"

namespace {

int cmd_validate(const std::string& path) {
  const auto report = tabattr::validate_config(path);
  for (const auto& w : report.warnings) std::cout << "warning: " << w << "\n";
  for (const auto& e : report.errors) std::cout << "error: " << e << "\n";
  if (report.ok()) std::cout << "ok: " << path << "\n";
  return report.ok() ? 0 : 1;
}

void print_auc_summary(const std::string& run_dir) {
  const auto rows = tabattr::summarize_auc(run_dir);
  if (rows.empty()) return;
  std::cout << "\narea under ablation curve by baseline (lower = more discriminative)\n";
  std::printf("  %-20s %10s %10s %14s\n", "baseline", "mean_auc", "control", "beats_random");
  for (const auto& r : rows) {
    std::printf("  %-20s %10.4f %10.4f %8zu / %-4zu\n", r.baseline.c_str(), r.mean_auc,
                r.mean_control_auc, r.beats_random, r.cells);
  }
  for (const auto& r : rows) {
    if (r.baseline == "uniform" || r.baseline == "max_distance") {
      const bool weak = r.beats_random * 2 <= r.cells;
      std::cout << "  note: " << r.baseline
                << (weak ? " failed to beat the random control in most cells"
                         : " beat the random control in most cells")
                << "\n";
    }
  }
}

int cmd_run(const std::string& path, const std::string& out, const std::string& seed) {
  const auto report = tabattr::validate_config(path);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  if (!report.ok()) {
    for (const auto& e : report.errors) std::cerr << "error: " << e << "\n";
    return 1;
  }
  tabattr::RunOptions options;
  if (!out.empty()) options.output_dir = out;
  if (!seed.empty()) {
    try {
      options.master_seed = std::stoull(seed);
    } catch (const std::exception&) {
      std::cerr << "error: --seed must be a non-negative integer\n";
      return 1;
    }
  }
  options.log = [](const std::string& line) { std::cerr << line << "\n"; };
  const auto result = tabattr::run_experiment(tabattr::load_config(path), options);
  std::size_t failed = 0;
  for (const auto& c : result.cells) failed += !c.ok;
  std::cout << "run written to " << result.output_dir << " (" << result.cells.size()
            << " cells, " << failed << " failed)\n";
  print_auc_summary(result.output_dir);
  return result.exit_code;
}

int cmd_plotdata(const std::string& run_dir) {
  const auto data = tabattr::emit_plotdata(run_dir);
  for (const auto& f : data.files) std::cout << f << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Baseline-sensitivity benchmark for local feature attributions"};
  app.require_subcommand(1);

  std::string config_path, out_dir, seed, run_dir;
  auto* validate = app.add_subcommand("validate", "Check a config file");
  validate->add_option("config", config_path, "Experiment config (JSON)")->required();

  auto* run = app.add_subcommand("run", "Run the full experiment matrix");
  run->add_option("config", config_path, "Experiment config (JSON)")->required();
  run->add_option("--out", out_dir, "Output directory (overrides the config)");
  run->add_option("--seed", seed, "Master seed (overrides the config)");

  auto* plot = app.add_subcommand("plotdata", "Emit per-figure CSV bundles for a run");
  plot->add_option("run-dir", run_dir, "Directory of a completed run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*validate) return cmd_validate(config_path);
    if (*run) return cmd_run(config_path, out_dir, seed);
    if (*plot) return cmd_plotdata(run_dir);
  } catch (const tabattr::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
