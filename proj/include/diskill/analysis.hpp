#ifndef DISKILL_ANALYSIS_HPP
#define DISKILL_ANALYSIS_HPP

#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "diskill/environments.hpp"
#include "diskill/moe_policy.hpp"

namespace diskill {

/// Evaluation contexts. For 2D spaces this is the set of valid cell centers of
/// an nx-by-ny lattice over the bounding box; otherwise a Halton point set.
struct ContextGrid {
  ContextBatch batch;
  int nx = 0;
  int ny = 0;
  double cell_area = 0.0;  // 0 for non-lattice grids
};

/// Lattice with about n valid points (2D), or the first n valid Halton points.
ContextGrid evaluation_grid(const ContextSpace& space, int n);
/// Valid cell centers of an exact nx-by-ny lattice. Requires a 2D space.
ContextGrid lattice_grid(const ContextSpace& space, int nx, int ny);

struct ActivityMap {
  ContextBatch grid;
  std::vector<int> counts;  // experts with gating >= threshold, per grid context
  double threshold = 0.2;
  int num_experts = 0;

  /// Fraction of grid contexts with at least m active experts.
  double fraction_with_at_least(int m) const;
};

ActivityMap activity_map(const MixturePolicy& policy, const ContextBatch& grid, double threshold = 0.2);
void write_activity_csv(std::ostream& out, const ActivityMap& map);

/// Per-expert softmax of the energies over the grid: K x N, rows sum to 1.
Mat curriculum_heatmap(const MixturePolicy& policy, const ContextBatch& grid);
/// Columns expert, x, y, p (first two context dimensions).
void write_heatmap_csv(std::ostream& out, const ContextBatch& grid, const Mat& probs);
/// One panel per expert; each cell's opacity is proportional to its probability.
void write_heatmap_svg(std::ostream& out, const ContextGrid& grid, const Mat& probs, const ContextSpace& space);

struct DiversityConfig {
  int samples_per_context = 32;
  /// A mode counts only when at least this share of the successful samples
  /// (and at least two of them) fall into it.
  double min_support = 0.1;
  int max_clusters = 4;
  double min_silhouette = 0.5;
};

struct ContextDiversity {
  Vec context;
  int samples = 0;
  int successes = 0;
  int modes = 0;  // distinct successful modes
  std::vector<std::string> mode_labels;
};

struct DiversityReport {
  std::vector<ContextDiversity> contexts;
  std::vector<int> expert_samples;
  std::vector<int> expert_successes;

  /// Fraction of contexts with at least m successful modes.
  double fraction_with_modes(int m) const;
  double expert_success_rate(int o) const;
};

/// Sign pattern of a descriptor, e.g. "+-" for (0.3, -1.2).
std::string sign_label(const Vec& features);

/// k-means with k = 1..max_k on the rows of `points`; k >= 2 is chosen only
/// when its mean silhouette exceeds `min_silhouette`. Returns a label per row.
std::vector<int> cluster_modes(const Mat& points, int max_k, double min_silhouette, std::mt19937_64& rng);

/// Samples act(stochastic) repeatedly per context, evaluates each draw and
/// counts distinct successful modes. When `traces` is given, tip trajectories
/// are written as rows context,sample,expert,success,step,x,y.
DiversityReport diversity_report(const MixturePolicy& policy, const Environment& env, const ContextBatch& contexts,
                                 const DiversityConfig& cfg, std::mt19937_64& rng, std::ostream* traces = nullptr);

void write_diversity_csv(std::ostream& out, const DiversityReport& report);

}  // namespace diskill

#endif  // DISKILL_ANALYSIS_HPP
