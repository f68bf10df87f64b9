#pragma once

#include <string>
#include <vector>

#include "dsdpg/agent.hpp"

namespace dsdpg::runlog {

inline constexpr const char* kCsvHeader =
    "step,eval_median,eval_mean,critic_loss,wm_loss,q_mean,wallclock_s";

// One wallclock entry per row; every other column is deterministic in the
// seed, so rerun comparisons mask the wallclock field.
void write_csv(const std::string& path, const agent::MetricLog& log,
               const std::vector<double>& wallclock_s);

struct CsvData {
  std::vector<agent::MetricRow> rows;
  std::vector<double> wallclock_s;
};
CsvData read_csv(const std::string& path);

// centered moving average; window 1 returns the input
std::vector<double> moving_average(const std::vector<double>& v, int window);

struct Curve {
  std::vector<long> steps;
  std::vector<double> median, q25, q75;
};

// median and 25-75% IQR across seeds of one CSV column, with optional
// window smoothing applied per seed first
Curve aggregate_column(const std::vector<std::string>& csv_paths,
                       const std::string& column, int smooth_window);

void write_curve_csv(const std::string& path, const Curve& curve);

double median_of(std::vector<double> v);
double quantile_of(std::vector<double> v, double q);  // linear interpolation

}  // namespace dsdpg::runlog
