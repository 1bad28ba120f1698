#ifndef DISKILL_STATS_HPP
#define DISKILL_STATS_HPP

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "diskill/nn.hpp"

namespace diskill {

/// Interquartile mean: mean of the middle 50% with fractional trimming at the
/// boundaries (sample i covers [i, i+1) of the sorted index axis; the window is
/// [n/4, 3n/4]). Throws std::invalid_argument for fewer than 4 values.
double iqm(std::vector<double> values);

/// Same weighting without the minimum-size check; used inside the bootstrap,
/// where a resample of two seeds is still meaningful.
double trimmed_iqm(std::vector<double> values);

/// Linear-interpolation (type 7) percentile of already sorted data, q in [0, 1].
double percentile_sorted(const std::vector<double>& sorted, double q);

/// One metric from several per-seed logs on a shared iteration grid.
struct SeedRunSet {
  std::vector<std::string> files;
  std::string metric;
  std::vector<int> iterations;
  Mat values;  // seeds x iterations

  int num_seeds() const { return static_cast<int>(values.rows()); }
};

/// Reads the metric column of each log. Rows where the metric is empty (for
/// example evaluation columns between evaluations) are skipped. All logs must
/// share the header and the resulting iteration grid.
SeedRunSet load_runset(const std::vector<std::string>& files, const std::string& metric);

/// Sorted list of paths matching a shell pattern.
std::vector<std::string> glob_paths(const std::string& pattern);

struct CiPoint {
  int iteration = 0;
  double iqm = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// Percentile bootstrap over seeds: every replicate draws num_seeds seeds with
/// replacement (one draw shared by all iterations of the replicate) and takes
/// the IQM across them. The point estimate uses all seeds.
std::vector<CiPoint> stratified_bootstrap_ci(const SeedRunSet& runs, int n_boot, double level,
                                             std::mt19937_64& rng);

/// Interval from explicit replicate values: the (1-level)/2 and (1+level)/2 percentiles.
std::pair<double, double> percentile_interval(std::vector<double> replicates, double level);

void write_ci_csv(const std::string& path, const SeedRunSet& runs, const std::vector<CiPoint>& points);

}  // namespace diskill

#endif  // DISKILL_STATS_HPP
