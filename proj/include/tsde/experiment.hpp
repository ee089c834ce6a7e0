#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <mutex>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "tsde/config.hpp"
#include "tsde/controller.hpp"
#include "tsde/errors.hpp"
#include "tsde/sim.hpp"

namespace tsde {

// Output time grid: dense up to t = 1000, then 100 points per decade,
// always ending exactly at T.
inline std::vector<long> make_time_grid(long T) {
  std::vector<long> grid;
  const long dense_end = std::min<long>(T, 1000);
  grid.reserve(static_cast<std::size_t>(dense_end) + 400);
  for (long t = 1; t <= dense_end; ++t) grid.push_back(t);
  if (T > 1000) {
    for (int i = 1;; ++i) {
      const long t = std::llround(std::pow(10.0, 3.0 + i / 100.0));
      if (t >= T) break;
      if (t > grid.back()) grid.push_back(t);
    }
    grid.push_back(T);
  }
  return grid;
}

struct RunSummary {
  int run_index = 0;
  std::uint64_t seed = 0;
  std::vector<double> regret_at_grid;
  std::vector<double> max_norm_at_grid;
  int episode_count = 0;
  double max_state_norm = 0.0;
  double final_regret = 0.0;
  long sampling_rejections = 0;
  int reinits = 0;
  long realized_jumps = 0;
};

struct AggregateResult {
  std::vector<long> grid;
  std::vector<double> mean_regret;
  std::vector<double> ci95;
  std::vector<double> mean_regret_per_t;
  std::vector<double> mean_max_norm;
  std::vector<RunSummary> runs;
  std::vector<std::pair<int, std::string>> failures;
  ExperimentConfig config;
  int workers = 1;
  double wall_clock_seconds = 0.0;
};

namespace detail {

inline RunSummary summarize_run(const RegretRecord& rec, const std::vector<long>& grid,
                                int run_index) {
  RunSummary s;
  s.run_index = run_index;
  s.seed = rec.master_seed;
  s.episode_count = rec.episode_count;
  s.max_state_norm = rec.max_state_norm;
  s.sampling_rejections = rec.sampling_rejections;
  s.reinits = static_cast<int>(rec.reinit_times.size());
  s.realized_jumps = static_cast<long>(rec.jump_times.size());
  s.regret_at_grid.reserve(grid.size());
  s.max_norm_at_grid.reserve(grid.size());
  double regret = 0.0;
  double max_norm = 0.0;
  std::size_t i = 0;
  for (const long t : grid) {
    while (i < rec.stage_costs.size() && static_cast<long>(i) < t) {
      regret += rec.stage_costs[i] - rec.oracle_costs[i];
      max_norm = std::max(max_norm, rec.state_norms[i]);
      ++i;
    }
    s.regret_at_grid.push_back(regret);
    s.max_norm_at_grid.push_back(max_norm);
  }
  s.final_regret = regret;
  return s;
}

inline Plant build_plant(const ExperimentConfig& cfg, int run_index) {
  RngStream noise(cfg.master_seed, static_cast<std::uint64_t>(run_index), Stream::Noise);
  RngStream jumps(cfg.master_seed, static_cast<std::uint64_t>(run_index), Stream::Jumps);

  SupportSet omega;
  switch (cfg.support.kind) {
    case SupportSpec::Kind::All:
      omega = SupportSet::all();
      break;
    case SupportSpec::Kind::NormBall:
      omega = SupportSet::norm_ball(cfg.support_center(), cfg.support.epsilon);
      break;
    case SupportSpec::Kind::SpectralRadiusBall:
      omega = SupportSet::spectral_radius_ball(
          SystemParams::from_ab(cfg.true_system.A, cfg.true_system.B),
          cfg.support.delta);
      break;
  }
  PriorSpec prior{cfg.theta_hat_1, cfg.sigma_1, omega};
  CostParams cost(cfg.Q, cfg.R);

  SystemParams theta_true;
  if (cfg.true_system.kind == TrueSystemSpec::Kind::Explicit) {
    theta_true = SystemParams::from_ab(cfg.true_system.A, cfg.true_system.B);
  } else {
    auto belief = make_posterior(cfg.theta_hat_1, cfg.sigma_1);
    auto drawn = sample_parameter(belief, omega, cost, jumps, cfg.max_sample_attempts,
                                  cfg.riccati_tol, cfg.riccati_max_iter);
    if (!drawn) throw SamplingExhaustedError(cfg.max_sample_attempts);
    theta_true = std::move(drawn->params);
  }

  JumpSchedule schedule = make_none_schedule();
  if (cfg.variant.kind == VariantSpec::Kind::TimeVarying)
    schedule = make_fixed_uniform_schedule(cfg.horizon, cfg.variant.alpha, jumps);

  return Plant(std::move(theta_true), std::move(cost), std::move(schedule),
               std::move(prior), std::move(noise), std::move(jumps));
}

inline ControllerConfig build_controller_config(const ExperimentConfig& cfg,
                                                const Plant& plant) {
  SupportSet omega;
  switch (cfg.support.kind) {
    case SupportSpec::Kind::All:
      omega = SupportSet::all();
      break;
    case SupportSpec::Kind::NormBall:
      omega = SupportSet::norm_ball(cfg.support_center(), cfg.support.epsilon);
      break;
    case SupportSpec::Kind::SpectralRadiusBall:
      omega = SupportSet::spectral_radius_ball(
          SystemParams::from_ab(cfg.true_system.A, cfg.true_system.B),
          cfg.support.delta);
      break;
  }
  (void)plant;
  ControllerConfig ctrl{PriorSpec{cfg.theta_hat_1, cfg.sigma_1, std::move(omega)},
                        CostParams(cfg.Q, cfg.R)};
  ctrl.variant = cfg.variant.kind == VariantSpec::Kind::TimeVarying
                     ? Variant::TimeVarying
                     : Variant::Stationary;
  ctrl.q = cfg.resolved_q();
  ctrl.max_sample_attempts = cfg.max_sample_attempts;
  ctrl.riccati_tol = cfg.riccati_tol;
  ctrl.riccati_max_iter = cfg.riccati_max_iter;
  return ctrl;
}

}  // namespace detail

// Full record of one run, for callers that need more than the summary.
inline RegretRecord execute_run(const ExperimentConfig& cfg, int run_index,
                                const RunOptions& opts = {}) {
  Plant plant = detail::build_plant(cfg, run_index);
  ControllerConfig ctrl = detail::build_controller_config(cfg, plant);
  RngStream sampler(cfg.master_seed, static_cast<std::uint64_t>(run_index),
                    Stream::Sampler);
  RegretRecord rec = run_controller(ctrl, plant, cfg.horizon, sampler, opts);
  rec.master_seed = cfg.master_seed;
  rec.run_index = static_cast<std::uint64_t>(run_index);
  return rec;
}

inline AggregateResult run_experiment(const ExperimentConfig& cfg, int workers = 0) {
  validate_config(cfg);
  if (workers <= 0) {
    workers = static_cast<int>(std::thread::hardware_concurrency());
    if (workers <= 0) workers = 1;
  }
  const auto started = std::chrono::steady_clock::now();
  const std::vector<long> grid = make_time_grid(cfg.horizon);

  std::vector<std::optional<RunSummary>> results(static_cast<std::size_t>(cfg.num_runs));
  std::vector<std::pair<int, std::string>> failures;
  std::mutex failure_mutex;
  std::atomic<int> next_run{0};

  auto worker = [&] {
    for (;;) {
      const int idx = next_run.fetch_add(1);
      if (idx >= cfg.num_runs) return;
      try {
        RegretRecord rec = execute_run(cfg, idx);
        results[static_cast<std::size_t>(idx)] = detail::summarize_run(rec, grid, idx);
      } catch (const std::exception& e) {
        std::lock_guard lock(failure_mutex);
        failures.emplace_back(idx, e.what());
      }
    }
  };

  if (workers == 1 || cfg.num_runs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    const int count = std::min(workers, cfg.num_runs);
    pool.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::sort(failures.begin(), failures.end());
  if (static_cast<double>(failures.size()) > 0.01 * cfg.num_runs) {
    std::ostringstream oss;
    oss << failures.size() << " of " << cfg.num_runs
        << " runs failed (tolerance is 1%); first error: " << failures.front().second;
    throw std::runtime_error(oss.str());
  }

  AggregateResult agg;
  agg.config = cfg;
  agg.grid = grid;
  agg.workers = workers;
  agg.failures = failures;
  for (auto& r : results)
    if (r) agg.runs.push_back(std::move(*r));

  const auto count = static_cast<double>(agg.runs.size());
  agg.mean_regret.assign(grid.size(), 0.0);
  agg.ci95.assign(grid.size(), 0.0);
  agg.mean_regret_per_t.assign(grid.size(), 0.0);
  agg.mean_max_norm.assign(grid.size(), 0.0);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double sum = 0.0, norm_sum = 0.0;
    for (const auto& run : agg.runs) {
      sum += run.regret_at_grid[g];
      norm_sum += run.max_norm_at_grid[g];
    }
    const double mean = sum / count;
    double ss = 0.0;
    for (const auto& run : agg.runs) {
      const double dev = run.regret_at_grid[g] - mean;
      ss += dev * dev;
    }
    const double sd = count > 1 ? std::sqrt(ss / (count - 1.0)) : 0.0;
    agg.mean_regret[g] = mean;
    agg.ci95[g] = 1.96 * sd / std::sqrt(count);
    agg.mean_regret_per_t[g] = mean / static_cast<double>(grid[g]);
    agg.mean_max_norm[g] = norm_sum / count;
  }

  agg.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return agg;
}

// Least-squares slope of log mean-regret against log t over [t_lo, t_hi].
inline double fit_regret_slope(const AggregateResult& result, long t_lo, long t_hi) {
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  long n = 0;
  for (std::size_t g = 0; g < result.grid.size(); ++g) {
    const long t = result.grid[g];
    if (t < t_lo || t > t_hi) continue;
    if (result.mean_regret[g] <= 0.0)
      throw NonPositiveRegretError("mean regret is non-positive at t = " +
                                   std::to_string(t));
    const double x = std::log(static_cast<double>(t));
    const double y = std::log(result.mean_regret[g]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n < 2) throw std::invalid_argument("slope window contains fewer than 2 points");
  const double dn = static_cast<double>(n);
  return (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
}

inline std::vector<double> regret_per_unit_time(const AggregateResult& result) {
  return result.mean_regret_per_t;
}

// ---- File emission ------------------------------------------------------

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

struct OutputPaths {
  std::filesystem::path aggregate;
  std::filesystem::path diagnostics;
  std::filesystem::path manifest;
};

inline OutputPaths output_paths(const std::filesystem::path& dir) {
  return {dir / "aggregate.csv", dir / "diagnostics.csv", dir / "manifest.json"};
}

inline OutputPaths emit_results(const AggregateResult& result,
                                const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const OutputPaths paths = output_paths(dir);

  {
    std::ofstream out(paths.aggregate, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + paths.aggregate.string());
    out << "t,mean_regret,ci95,mean_regret_per_t,mean_Xt\n";
    for (std::size_t g = 0; g < result.grid.size(); ++g) {
      out << result.grid[g] << ',' << detail::fmt_double(result.mean_regret[g]) << ','
          << detail::fmt_double(result.ci95[g]) << ','
          << detail::fmt_double(result.mean_regret_per_t[g]) << ','
          << detail::fmt_double(result.mean_max_norm[g]) << '\n';
    }
  }
  {
    std::ofstream out(paths.diagnostics, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + paths.diagnostics.string());
    out << "run_index,seed,K_T,X_T,final_regret,rejections,reinits\n";
    for (const auto& run : result.runs) {
      out << run.run_index << ',' << run.seed << ',' << run.episode_count << ','
          << detail::fmt_double(run.max_state_norm) << ','
          << detail::fmt_double(run.final_regret) << ',' << run.sampling_rejections
          << ',' << run.reinits << '\n';
    }
  }
  {
    nlohmann::json manifest;
    manifest["config"] = config_to_json(result.config);
    manifest["library_version"] = kLibraryVersion;
    manifest["master_seed"] = result.config.master_seed;
    manifest["workers"] = result.workers;
    manifest["wall_clock_seconds"] = result.wall_clock_seconds;
    manifest["completed_runs"] = result.runs.size();
    nlohmann::json fails = nlohmann::json::array();
    for (const auto& [idx, what] : result.failures)
      fails.push_back({{"run_index", idx}, {"error", what}});
    manifest["failed_runs"] = std::move(fails);
    if (result.config.variant.kind == VariantSpec::Kind::TimeVarying)
      manifest["resolved_q"] = result.config.resolved_q();

    // Diagnostics summary: median K_T and its sqrt(T log T) scaling constant.
    std::vector<int> kts;
    for (const auto& run : result.runs) kts.push_back(run.episode_count);
    if (!kts.empty()) {
      std::sort(kts.begin(), kts.end());
      const double median_kt = kts[kts.size() / 2];
      manifest["median_K_T"] = median_kt;
      const double T = static_cast<double>(result.config.horizon);
      if (T > 1.0)
        manifest["median_K_T_over_sqrt_TlogT"] = median_kt / std::sqrt(T * std::log(T));
    }
    // Slope over the default window [T/100, T], when regret is positive there.
    try {
      const long lo = std::max<long>(1, result.config.horizon / 100);
      manifest["regret_slope"] = fit_regret_slope(result, lo, result.config.horizon);
      manifest["regret_slope_window"] = {lo, result.config.horizon};
    } catch (const std::exception&) {
      manifest["regret_slope"] = nullptr;
    }

    std::ofstream out(paths.manifest, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + paths.manifest.string());
    out << manifest.dump(2) << '\n';
  }
  return paths;
}

// Reads an emitted aggregate table back (used by the slope subcommand and
// the round-trip tests).
inline AggregateResult read_aggregate(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "t,mean_regret,ci95,mean_regret_per_t,mean_Xt")
    throw std::runtime_error("unexpected header in " + path.string());
  AggregateResult result;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() != 5)
      throw std::runtime_error("malformed row in " + path.string() + ": " + line);
    result.grid.push_back(std::stol(cells[0]));
    result.mean_regret.push_back(std::stod(cells[1]));
    result.ci95.push_back(std::stod(cells[2]));
    result.mean_regret_per_t.push_back(std::stod(cells[3]));
    result.mean_max_norm.push_back(std::stod(cells[4]));
  }
  return result;
}

}  // namespace tsde
