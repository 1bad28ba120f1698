#include "diskill/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>

#include "diskill/errors.hpp"
#include "diskill/serialization.hpp"

namespace diskill {

namespace {

double halton(int index, int base) {
  double f = 1.0, r = 0.0;
  for (int i = index; i > 0; i /= base) {
    f /= base;
    r += f * (i % base);
  }
  return r;
}

constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};

ContextBatch from_columns(const std::vector<Vec>& cols, int dim) {
  ContextBatch b;
  b.contexts = Mat(dim, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) b.contexts.col(static_cast<Eigen::Index>(i)) = cols[i];
  return b;
}

}  // namespace

ContextGrid lattice_grid(const ContextSpace& space, int nx, int ny) {
  require_shape(space.dim == 2, "lattice grids need a 2D context space");
  if (nx < 1 || ny < 1) throw ConfigError("lattice size must be positive");
  const double wx = space.upper[0] - space.lower[0];
  const double wy = space.upper[1] - space.lower[1];
  std::vector<Vec> pts;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      Vec c(2);
      c << space.lower[0] + (i + 0.5) * wx / nx, space.lower[1] + (j + 0.5) * wy / ny;
      if (space.contains(c)) pts.push_back(c);
    }
  ContextGrid g;
  g.batch = from_columns(pts, 2);
  g.nx = nx;
  g.ny = ny;
  g.cell_area = wx * wy / (static_cast<double>(nx) * ny);
  return g;
}

ContextGrid evaluation_grid(const ContextSpace& space, int n) {
  if (n < 1) throw ConfigError("grid size must be positive");
  if (space.dim == 2) {
    const double wx = space.upper[0] - space.lower[0];
    const double wy = space.upper[1] - space.lower[1];
    const ContextGrid probe = lattice_grid(space, 200, 200);
    const double frac = std::max(1e-3, probe.batch.size() / 40000.0);
    const double cells = n / frac;
    const int nx = std::max(1, static_cast<int>(std::lround(std::sqrt(cells * wx / wy))));
    const int ny = std::max(1, static_cast<int>(std::lround(std::sqrt(cells * wy / wx))));
    return lattice_grid(space, nx, ny);
  }
  require_shape(space.dim <= static_cast<int>(std::size(kPrimes)), "context dimension too large for Halton grid");
  std::vector<Vec> pts;
  for (int idx = 1; static_cast<int>(pts.size()) < n; ++idx) {
    if (idx > 1000 * n + 1000) throw ConfigError("context space is too sparse for a Halton grid");
    Vec c(space.dim);
    for (int d = 0; d < space.dim; ++d)
      c[d] = space.lower[d] + halton(idx, kPrimes[d]) * (space.upper[d] - space.lower[d]);
    if (space.contains(c)) pts.push_back(c);
  }
  ContextGrid g;
  g.batch = from_columns(pts, space.dim);
  return g;
}

double ActivityMap::fraction_with_at_least(int m) const {
  if (counts.empty()) return 0.0;
  const auto hits = std::count_if(counts.begin(), counts.end(), [m](int c) { return c >= m; });
  return static_cast<double>(hits) / static_cast<double>(counts.size());
}

ActivityMap activity_map(const MixturePolicy& policy, const ContextBatch& grid, double threshold) {
  ActivityMap map;
  map.grid = grid;
  map.threshold = threshold;
  map.num_experts = policy.num_experts();
  for (int i = 0; i < grid.size(); ++i) {
    const Vec g = policy.gating(grid.at(i));
    map.counts.push_back(static_cast<int>((g.array() >= threshold).count()));
  }
  return map;
}

void write_activity_csv(std::ostream& out, const ActivityMap& map) {
  out << "index";
  for (int d = 0; d < map.grid.dim(); ++d) out << ",c" << d;
  out << ",active_experts\n";
  for (int i = 0; i < map.grid.size(); ++i) {
    out << i;
    for (int d = 0; d < map.grid.dim(); ++d) out << ',' << format_double(map.grid.contexts(d, i));
    out << ',' << map.counts[static_cast<std::size_t>(i)] << '\n';
  }
}

Mat curriculum_heatmap(const MixturePolicy& policy, const ContextBatch& grid) {
  Mat probs(policy.num_experts(), grid.size());
  for (int o = 0; o < policy.num_experts(); ++o) probs.row(o) = policy.curriculum_probs(o, grid).transpose();
  return probs;
}

void write_heatmap_csv(std::ostream& out, const ContextBatch& grid, const Mat& probs) {
  require_shape(grid.dim() >= 2, "heatmaps need at least two context dimensions");
  require_shape(probs.cols() == grid.size(), "probability surface does not match the grid");
  out << "expert,x,y,p\n";
  for (Eigen::Index o = 0; o < probs.rows(); ++o)
    for (int i = 0; i < grid.size(); ++i)
      out << o << ',' << format_double(grid.contexts(0, i)) << ',' << format_double(grid.contexts(1, i)) << ','
          << format_double(probs(o, i)) << '\n';
}

void write_heatmap_svg(std::ostream& out, const ContextGrid& grid, const Mat& probs, const ContextSpace& space) {
  require_shape(space.dim == 2 && grid.nx > 0, "SVG heatmaps need a 2D lattice grid");
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f"};
  const double panel = 240.0, pad = 20.0;
  const auto k = static_cast<int>(probs.rows());
  const double wx = space.upper[0] - space.lower[0];
  const double wy = space.upper[1] - space.lower[1];
  const double sx = panel / wx, sy = panel / wy;
  const double cw = wx / grid.nx * sx, ch = wy / grid.ny * sy;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << k * (panel + pad) + pad << "\" height=\""
      << panel + 2 * pad + 14 << "\">\n";
  out << "<!-- per-expert curriculum probabilities; the CSV export holds the exact values -->\n";
  for (int o = 0; o < k; ++o) {
    const double x0 = pad + o * (panel + pad);
    const double pmax = std::max(probs.row(o).maxCoeff(), 1e-300);
    out << "<g>\n<rect x=\"" << x0 << "\" y=\"" << pad << "\" width=\"" << panel << "\" height=\"" << panel
        << "\" fill=\"none\" stroke=\"#999\"/>\n";
    out << "<text x=\"" << x0 << "\" y=\"" << pad - 5 << "\" font-size=\"12\">expert " << o << "</text>\n";
    for (int i = 0; i < grid.batch.size(); ++i) {
      const double x = x0 + (grid.batch.contexts(0, i) - space.lower[0]) * sx - cw / 2;
      const double y = pad + (space.upper[1] - grid.batch.contexts(1, i)) * sy - ch / 2;
      out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cw << "\" height=\"" << ch << "\" fill=\""
          << kColors[o % 10] << "\" fill-opacity=\"" << probs(o, i) / pmax << "\"/>\n";
    }
    out << "</g>\n";
  }
  out << "</svg>\n";
}

double DiversityReport::fraction_with_modes(int m) const {
  if (contexts.empty()) return 0.0;
  const auto hits = std::count_if(contexts.begin(), contexts.end(), [m](const auto& c) { return c.modes >= m; });
  return static_cast<double>(hits) / static_cast<double>(contexts.size());
}

double DiversityReport::expert_success_rate(int o) const {
  const int n = expert_samples.at(static_cast<std::size_t>(o));
  return n == 0 ? 0.0 : static_cast<double>(expert_successes[static_cast<std::size_t>(o)]) / n;
}

std::string sign_label(const Vec& features) {
  std::string s;
  for (Eigen::Index i = 0; i < features.size(); ++i) s += features[i] < 0.0 ? '-' : '+';
  return s;
}

namespace {

std::vector<int> kmeans(const Mat& x, int k, std::mt19937_64& rng, double* inertia) {
  const auto n = x.rows();
  Mat centers(k, x.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centers.row(0) = x.row(first(rng));
  Vec d2(n);
  for (int j = 1; j < k; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int m = 0; m < j; ++m) best = std::min(best, (x.row(i) - centers.row(m)).squaredNorm());
      d2[i] = best;
    }
    if (d2.sum() <= 0.0) {
      centers.row(j) = x.row(first(rng));
    } else {
      std::discrete_distribution<Eigen::Index> pick(d2.data(), d2.data() + n);
      centers.row(j) = x.row(pick(rng));
    }
  }
  std::vector<int> label(static_cast<std::size_t>(n), 0);
  for (int it = 0; it < 100; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int m = 0; m < k; ++m) {
        const double d = (x.row(i) - centers.row(m)).squaredNorm();
        if (d < bd) {
          bd = d;
          best = m;
        }
      }
      if (label[static_cast<std::size_t>(i)] != best) changed = true;
      label[static_cast<std::size_t>(i)] = best;
    }
    for (int m = 0; m < k; ++m) {
      Vec sum = Vec::Zero(x.cols());
      int cnt = 0;
      for (Eigen::Index i = 0; i < n; ++i)
        if (label[static_cast<std::size_t>(i)] == m) {
          sum += x.row(i).transpose();
          ++cnt;
        }
      if (cnt > 0) centers.row(m) = (sum / cnt).transpose();
    }
    if (!changed && it > 0) break;
  }
  *inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) *inertia += (x.row(i) - centers.row(label[static_cast<std::size_t>(i)])).squaredNorm();
  return label;
}

double silhouette(const Mat& x, const std::vector<int>& label, int k) {
  const auto n = x.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<double> sum(static_cast<std::size_t>(k), 0.0);
    std::vector<int> cnt(static_cast<std::size_t>(k), 0);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const auto lj = static_cast<std::size_t>(label[static_cast<std::size_t>(j)]);
      sum[lj] += (x.row(i) - x.row(j)).norm();
      ++cnt[lj];
    }
    const auto li = static_cast<std::size_t>(label[static_cast<std::size_t>(i)]);
    if (cnt[li] == 0) continue;  // singleton clusters score 0
    const double a = sum[li] / cnt[li];
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < sum.size(); ++m)
      if (m != li && cnt[m] > 0) b = std::min(b, sum[m] / cnt[m]);
    if (!std::isfinite(b)) continue;
    const double den = std::max(a, b);
    total += den > 0.0 ? (b - a) / den : 0.0;
  }
  return total / static_cast<double>(n);
}

}  // namespace

std::vector<int> cluster_modes(const Mat& points, int max_k, double min_silhouette, std::mt19937_64& rng) {
  const auto n = static_cast<int>(points.rows());
  std::vector<int> best(static_cast<std::size_t>(n), 0);
  double best_score = min_silhouette;
  for (int k = 2; k <= std::min(max_k, n - 1); ++k) {
    std::vector<int> labels;
    double best_inertia = std::numeric_limits<double>::infinity();
    for (int restart = 0; restart < 5; ++restart) {
      double inertia = 0.0;
      auto l = kmeans(points, k, rng, &inertia);
      if (inertia < best_inertia) {
        best_inertia = inertia;
        labels = std::move(l);
      }
    }
    const double s = silhouette(points, labels, k);
    if (s > best_score) {
      best_score = s;
      best = labels;
    }
  }
  return best;
}

DiversityReport diversity_report(const MixturePolicy& policy, const Environment& env, const ContextBatch& contexts,
                                 const DiversityConfig& cfg, std::mt19937_64& rng, std::ostream* traces) {
  if (cfg.samples_per_context < 1) throw ConfigError("samples_per_context must be positive");
  DiversityReport report;
  report.expert_samples.assign(static_cast<std::size_t>(policy.num_experts()), 0);
  report.expert_successes.assign(static_cast<std::size_t>(policy.num_experts()), 0);
  if (traces != nullptr) *traces << "context,sample,expert,success,step,x,y\n";

  for (int ci = 0; ci < contexts.size(); ++ci) {
    ContextDiversity cd;
    cd.context = contexts.at(ci);
    std::vector<Vec> features;
    for (int s = 0; s < cfg.samples_per_context; ++s) {
      const auto [o, theta] = policy.act(cd.context, rng, false);
      const EpisodeResult res = env.evaluate(cd.context, MpParams{theta});
      ++cd.samples;
      ++report.expert_samples[static_cast<std::size_t>(o)];
      if (res.success) {
        ++cd.successes;
        ++report.expert_successes[static_cast<std::size_t>(o)];
        features.push_back(res.diagnostics.mode_features);
      }
      if (traces != nullptr) {
        const Mat& tr = res.diagnostics.tip_trace;
        for (Eigen::Index k = 0; k < tr.rows(); ++k)
          *traces << ci << ',' << s << ',' << o << ',' << (res.success ? 1 : 0) << ',' << k << ','
                  << format_double(tr(k, 0)) << ',' << format_double(tr(k, 1)) << '\n';
      }
    }

    std::map<std::string, int> support;
    if (env.discrete_modes()) {
      for (const auto& f : features) ++support[sign_label(f)];
    } else if (!features.empty()) {
      Mat pts(static_cast<Eigen::Index>(features.size()), features.front().size());
      for (std::size_t i = 0; i < features.size(); ++i) pts.row(static_cast<Eigen::Index>(i)) = features[i].transpose();
      const auto labels = cluster_modes(pts, cfg.max_clusters, cfg.min_silhouette, rng);
      for (int l : labels) ++support["cluster" + std::to_string(l)];
    }
    const double needed = std::max(2.0, cfg.min_support * cd.successes);
    for (const auto& [label, count] : support)
      if (count >= needed) cd.mode_labels.push_back(label);
    cd.modes = static_cast<int>(cd.mode_labels.size());
    report.contexts.push_back(std::move(cd));
  }
  return report;
}

void write_diversity_csv(std::ostream& out, const DiversityReport& report) {
  const int dim = report.contexts.empty() ? 0 : static_cast<int>(report.contexts.front().context.size());
  out << "index";
  for (int d = 0; d < dim; ++d) out << ",c" << d;
  out << ",samples,successes,modes,mode_labels\n";
  for (std::size_t i = 0; i < report.contexts.size(); ++i) {
    const auto& c = report.contexts[i];
    out << i;
    for (int d = 0; d < dim; ++d) out << ',' << format_double(c.context[d]);
    out << ',' << c.samples << ',' << c.successes << ',' << c.modes << ',';
    for (std::size_t m = 0; m < c.mode_labels.size(); ++m) out << (m ? ";" : "") << c.mode_labels[m];
    out << '\n';
  }
}

}  // namespace diskill
