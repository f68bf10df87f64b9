#include "dsdpg/runlog.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dsdpg::runlog {

namespace {
std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace

void write_csv(const std::string& path, const agent::MetricLog& log,
               const std::vector<double>& wallclock_s) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_csv: cannot open " + path);
  os << kCsvHeader << "\n";
  for (std::size_t i = 0; i < log.rows.size(); ++i) {
    const auto& r = log.rows[i];
    const double wc = i < wallclock_s.size() ? wallclock_s[i] : 0.0;
    os << r.step << ',' << fmt(r.eval_median) << ',' << fmt(r.eval_mean) << ','
       << fmt(r.critic_loss) << ',' << fmt(r.wm_loss) << ',' << fmt(r.q_mean)
       << ',' << fmt(wc) << "\n";
  }
  if (log.aborted) os << "# aborted: " << log.abort_reason << "\n";
}

CsvData read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_csv: cannot open " + path);
  std::string line;
  if (!std::getline(is, line) || line != kCsvHeader)
    throw std::runtime_error("read_csv: bad header in " + path);
  CsvData data;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<double> cols;
    while (std::getline(ss, tok, ',')) cols.push_back(std::stod(tok));
    if (cols.size() != 7) throw std::runtime_error("read_csv: bad row in " + path);
    agent::MetricRow r;
    r.step = long(cols[0]);
    r.eval_median = cols[1];
    r.eval_mean = cols[2];
    r.critic_loss = cols[3];
    r.wm_loss = cols[4];
    r.q_mean = cols[5];
    data.rows.push_back(r);
    data.wallclock_s.push_back(cols[6]);
  }
  return data;
}

std::vector<double> moving_average(const std::vector<double>& v, int window) {
  if (window <= 1 || v.empty()) return v;
  std::vector<double> out(v.size());
  const int half = window / 2;
  for (int i = 0; i < int(v.size()); ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(int(v.size()) - 1, i + (window - 1 - half));
    double s = 0;
    for (int j = lo; j <= hi; ++j) s += v[j];
    out[i] = s / (hi - lo + 1);
  }
  return out;
}

double median_of(std::vector<double> v) { return quantile_of(std::move(v), 0.5); }

double quantile_of(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("quantile_of: empty");
  std::sort(v.begin(), v.end());
  const double pos = q * (v.size() - 1);
  const std::size_t lo = std::size_t(std::floor(pos));
  const std::size_t hi = std::size_t(std::ceil(pos));
  const double frac = pos - double(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

Curve aggregate_column(const std::vector<std::string>& csv_paths,
                       const std::string& column, int smooth_window) {
  if (csv_paths.empty()) throw std::invalid_argument("aggregate_column: no inputs");
  std::vector<CsvData> data;
  for (const auto& p : csv_paths) data.push_back(read_csv(p));
  const std::size_t n = data[0].rows.size();
  for (const auto& d : data)
    if (d.rows.size() != n)
      throw std::runtime_error("aggregate_column: seed logs have different lengths");

  auto col_of = [&](const agent::MetricRow& r) -> double {
    if (column == "eval_median") return r.eval_median;
    if (column == "eval_mean") return r.eval_mean;
    if (column == "critic_loss") return r.critic_loss;
    if (column == "wm_loss") return r.wm_loss;
    if (column == "q_mean") return r.q_mean;
    throw std::invalid_argument("aggregate_column: unknown column " + column);
  };

  std::vector<std::vector<double>> per_seed;
  for (const auto& d : data) {
    std::vector<double> v;
    for (const auto& r : d.rows) v.push_back(col_of(r));
    per_seed.push_back(moving_average(v, smooth_window));
  }

  Curve c;
  for (std::size_t i = 0; i < n; ++i) {
    c.steps.push_back(data[0].rows[i].step);
    std::vector<double> xs;
    for (const auto& v : per_seed) xs.push_back(v[i]);
    c.median.push_back(median_of(xs));
    c.q25.push_back(quantile_of(xs, 0.25));
    c.q75.push_back(quantile_of(xs, 0.75));
  }
  return c;
}

void write_curve_csv(const std::string& path, const Curve& curve) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_curve_csv: cannot open " + path);
  os << "step,median,q25,q75\n";
  for (std::size_t i = 0; i < curve.steps.size(); ++i)
    os << curve.steps[i] << ',' << fmt(curve.median[i]) << ',' << fmt(curve.q25[i])
       << ',' << fmt(curve.q75[i]) << "\n";
}

}  // namespace dsdpg::runlog
