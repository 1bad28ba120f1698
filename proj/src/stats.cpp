#include "diskill/stats.hpp"

#include <glob.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "diskill/errors.hpp"
#include "diskill/serialization.hpp"

namespace diskill {

double trimmed_iqm(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("iqm of an empty set");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  const double lo = 0.25 * n;
  const double hi = 0.75 * n;
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double a = std::max(lo, static_cast<double>(i));
    const double b = std::min(hi, static_cast<double>(i + 1));
    if (b > a) sum += (b - a) * values[i];
  }
  return sum / (hi - lo);
}

double iqm(std::vector<double> values) {
  if (values.size() < 4)
    throw std::invalid_argument("iqm needs at least 4 values, got " + std::to_string(values.size()));
  return trimmed_iqm(std::move(values));
}

double percentile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("percentile of an empty set");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * std::clamp(q, 0.0, 1.0);
  const auto i = static_cast<std::size_t>(std::floor(h));
  if (i + 1 >= sorted.size()) return sorted.back();
  return sorted[i] + (h - static_cast<double>(i)) * (sorted[i + 1] - sorted[i]);
}

std::pair<double, double> percentile_interval(std::vector<double> replicates, double level) {
  std::sort(replicates.begin(), replicates.end());
  return {percentile_sorted(replicates, 0.5 * (1.0 - level)), percentile_sorted(replicates, 0.5 * (1.0 + level))};
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

SeedRunSet load_runset(const std::vector<std::string>& files, const std::string& metric) {
  if (files.empty()) throw ConfigError("no log files given");
  SeedRunSet set;
  set.files = files;
  set.metric = metric;
  std::string header;
  std::vector<std::vector<double>> rows;
  for (const auto& path : files) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read log '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("empty log '" + path + "'");
    if (header.empty()) {
      header = line;
    } else if (line != header) {
      throw ConfigError("log '" + path + "' has a different header");
    }
    const auto cols = split_csv(line);
    const auto it = std::find(cols.begin(), cols.end(), metric);
    if (it == cols.end()) throw ConfigError("metric '" + metric + "' not in log header");
    const auto col = static_cast<std::size_t>(it - cols.begin());

    std::vector<int> iters;
    std::vector<double> vals;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto cells = split_csv(line);
      if (cells.size() <= col || cells[col].empty()) continue;
      iters.push_back(std::stoi(cells[0]));
      vals.push_back(std::stod(cells[col]));
    }
    if (set.iterations.empty() && rows.empty()) {
      set.iterations = iters;
    } else if (iters != set.iterations) {
      throw ConfigError("log '" + path + "' has a different iteration grid");
    }
    rows.push_back(std::move(vals));
  }
  set.values = Mat(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(set.iterations.size()));
  for (std::size_t s = 0; s < rows.size(); ++s)
    for (std::size_t t = 0; t < rows[s].size(); ++t)
      set.values(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t)) = rows[s][t];
  return set;
}

std::vector<std::string> glob_paths(const std::string& pattern) {
  glob_t g{};
  std::vector<std::string> out;
  if (::glob(pattern.c_str(), 0, nullptr, &g) == 0) {
    for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
  }
  globfree(&g);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<CiPoint> stratified_bootstrap_ci(const SeedRunSet& runs, int n_boot, double level,
                                             std::mt19937_64& rng) {
  const int n = runs.num_seeds();
  if (n < 2) throw std::invalid_argument("bootstrap needs at least 2 seeds");
  if (n_boot < 1) throw std::invalid_argument("n_boot must be positive");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("level must be in (0, 1)");
  const auto t_count = static_cast<std::size_t>(runs.values.cols());
  std::vector<std::vector<double>> reps(t_count, std::vector<double>(static_cast<std::size_t>(n_boot)));
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::vector<int> draw(static_cast<std::size_t>(n));
  std::vector<double> sample(static_cast<std::size_t>(n));
  for (int b = 0; b < n_boot; ++b) {
    for (auto& d : draw) d = pick(rng);
    for (std::size_t t = 0; t < t_count; ++t) {
      for (std::size_t s = 0; s < draw.size(); ++s)
        sample[s] = runs.values(draw[s], static_cast<Eigen::Index>(t));
      reps[t][static_cast<std::size_t>(b)] = trimmed_iqm(sample);
    }
  }
  std::vector<CiPoint> out;
  for (std::size_t t = 0; t < t_count; ++t) {
    std::vector<double> col(static_cast<std::size_t>(n));
    for (int s = 0; s < n; ++s) col[static_cast<std::size_t>(s)] = runs.values(s, static_cast<Eigen::Index>(t));
    CiPoint p;
    p.iteration = runs.iterations[t];
    p.iqm = trimmed_iqm(col);
    std::tie(p.lo, p.hi) = percentile_interval(std::move(reps[t]), level);
    out.push_back(p);
  }
  return out;
}

void write_ci_csv(const std::string& path, const SeedRunSet& runs, const std::vector<CiPoint>& points) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << "iteration," << runs.metric << "_iqm,ci_lo,ci_hi,seeds\n";
  for (const auto& p : points)
    out << p.iteration << ',' << format_double(p.iqm) << ',' << format_double(p.lo) << ',' << format_double(p.hi)
        << ',' << runs.num_seeds() << '\n';
}

}  // namespace diskill
