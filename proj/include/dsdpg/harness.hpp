#pragma once

#include <iosfwd>
#include <memory>
#include <string>

#include "dsdpg/config.hpp"
#include "dsdpg/envs.hpp"
#include "dsdpg/supervised.hpp"

namespace dsdpg::harness {

// exit codes: 0 success, 1 usage error, 2 runtime failure, 3 suite property failure
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;
inline constexpr int kExitSuiteFailure = 3;

std::unique_ptr<envs::Env> make_env(const config::ExperimentConfig& cfg,
                                    std::uint64_t seed);

// one training run; deterministic in (cfg, seed)
agent::MetricLog train_single(const config::ExperimentConfig& cfg, std::uint64_t seed,
                              std::vector<double>* wallclock_s);

// runs every seed (fanning out to `jobs` worker threads), writes
// <out>/seed_<n>.csv, checkpoints, and summary.json with median + IQR of the
// final evaluation return across seeds
int run_experiment(const config::ExperimentConfig& cfg, std::ostream& log);

// evaluation-only entry: loads <out>/policy_seed<n>.ckpt and rolls it out
int run_eval(const config::ExperimentConfig& cfg, std::uint64_t seed, int episodes,
             std::ostream& log);

// aggregates per-seed CSVs in a run directory into per-column curve files
// (median and 25-75% IQR, optional window smoothing)
int emit_plot_data(const std::string& run_dir, int smooth_window, std::ostream& log);

// the verification suite; writes suite_report.json when out_dir is nonempty
int run_suite(std::uint64_t seed, int sizes, const std::string& out_dir,
              std::ostream& log);

// supervised joint-output-and-gradient toy; trains the distributional
// generator and the deterministic regressor and writes both logs
int run_supervised(const supervised::SupervisedConfig& cfg, const std::string& out_dir,
                   std::ostream& log);

}  // namespace dsdpg::harness
