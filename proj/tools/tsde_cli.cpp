#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "tsde/tsde.hpp"

namespace {

std::optional<std::uint64_t> env_u64(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return std::strtoull(v, nullptr, 10);
}

int run_command(const std::string& config_path, const std::string& preset,
                std::optional<int> runs, std::optional<long> horizon,
                std::optional<std::uint64_t> seed, std::optional<std::string> out,
                std::optional<int> workers) {
  tsde::ExperimentConfig cfg;
  if (!preset.empty()) {
    cfg = tsde::make_preset(preset);
  } else if (!config_path.empty()) {
    cfg = tsde::load_config(config_path);
  } else {
    std::cerr << "error: provide a config file or --preset NAME\n";
    return 2;
  }
  if (runs) cfg.num_runs = *runs;
  if (horizon) cfg.horizon = *horizon;
  if (seed) cfg.master_seed = *seed;
  if (auto env_seed = env_u64("TSDE_MASTER_SEED")) cfg.master_seed = *env_seed;
  if (out) cfg.out_dir = *out;

  int worker_count = workers.value_or(0);
  if (auto env_workers = env_u64("TSDE_WORKERS"))
    worker_count = static_cast<int>(*env_workers);

  tsde::validate_config(cfg);
  const auto result = tsde::run_experiment(cfg, worker_count);
  const auto paths = tsde::emit_results(result, cfg.out_dir);
  std::cout << "scenario: " << cfg.scenario << "\n"
            << "runs completed: " << result.runs.size() << " of " << cfg.num_runs
            << "\n"
            << "final mean regret: " << result.mean_regret.back() << "\n"
            << "wrote " << paths.aggregate.string() << "\n"
            << "wrote " << paths.diagnostics.string() << "\n"
            << "wrote " << paths.manifest.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TSDE / TSDE-TV adaptive LQ control experiments"};
  app.require_subcommand(1);

  // run
  std::string config_path, preset;
  int runs = 0;
  long horizon = 0;
  std::uint64_t seed = 0;
  std::string out_dir;
  int workers = 0;
  auto* run = app.add_subcommand("run", "Run a Monte Carlo experiment");
  run->add_option("config", config_path, "Config file (JSON)");
  run->add_option("--preset", preset, "Named preset instead of a config file");
  auto* runs_opt = run->add_option("--runs", runs, "Override number of runs");
  auto* horizon_opt = run->add_option("--horizon", horizon, "Override horizon T");
  auto* seed_opt = run->add_option("--seed", seed, "Override master seed");
  auto* out_opt = run->add_option("--out", out_dir, "Output directory");
  auto* workers_opt = run->add_option("--workers", workers, "Worker thread count");

  // list-presets
  auto* list = app.add_subcommand("list-presets", "List named preset scenarios");

  // slope
  std::string aggregate_path, window;
  auto* slope = app.add_subcommand("slope", "Fit a log-log regret slope");
  slope->add_option("aggregate", aggregate_path, "Aggregate table file")->required();
  slope->add_option("--window", window, "Fit window LO,HI")->required();

  // validate
  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "Validate a config file");
  validate->add_option("config", validate_path, "Config file (JSON)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      return run_command(
          config_path, preset,
          runs_opt->count() ? std::optional<int>(runs) : std::nullopt,
          horizon_opt->count() ? std::optional<long>(horizon) : std::nullopt,
          seed_opt->count() ? std::optional<std::uint64_t>(seed) : std::nullopt,
          out_opt->count() ? std::optional<std::string>(out_dir) : std::nullopt,
          workers_opt->count() ? std::optional<int>(workers) : std::nullopt);
    }
    if (list->parsed()) {
      for (const auto& name : tsde::preset_names()) {
        const auto cfg = tsde::make_preset(name);
        std::cout << name << "  (n=" << cfg.n << ", m=" << cfg.m
                  << ", T=" << cfg.horizon << ", runs=" << cfg.num_runs
                  << (cfg.assumption_violating ? ", assumption-violating" : "")
                  << ")\n";
      }
      return 0;
    }
    if (slope->parsed()) {
      const auto comma = window.find(',');
      if (comma == std::string::npos) {
        std::cerr << "error: --window must be LO,HI\n";
        return 2;
      }
      const long lo = std::stol(window.substr(0, comma));
      const long hi = std::stol(window.substr(comma + 1));
      const auto agg = tsde::read_aggregate(aggregate_path);
      std::cout << tsde::fit_regret_slope(agg, lo, hi) << "\n";
      return 0;
    }
    if (validate->parsed()) {
      tsde::load_config(validate_path);
      std::cout << "ok\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
