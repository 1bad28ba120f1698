#ifndef DISKILL_MOE_POLICY_HPP
#define DISKILL_MOE_POLICY_HPP

#include <random>
#include <utility>
#include <vector>

#include "diskill/environments.hpp"
#include "diskill/gaussian.hpp"
#include "diskill/nn.hpp"

namespace diskill {

struct ModelConfig {
  int num_experts = 10;
  std::vector<int> expert_hidden{32, 32};  // empty -> linear experts
  std::vector<int> energy_hidden{16, 16};
  std::vector<int> critic_hidden{32, 32};
  double init_std = 1.0;  // initial expert standard deviation per parameter dimension
};

/// Context-conditioned Gaussian over motion primitive parameters with a
/// context-independent Cholesky factor.
struct Expert {
  DenseNet mean_net;
  Vec chol_raw;

  int param_dim() const { return mean_net.output_dim(); }
  Mat chol() const { return chol_from_raw(chol_raw, param_dim()); }
  GaussianParams distribution(const Vec& c) const { return {mean_net.forward(c), chol()}; }

  std::size_t num_params() const { return mean_net.num_params() + static_cast<std::size_t>(chol_raw.size()); }
  Vec flat_params() const;
  void set_flat_params(const Vec& flat);
};

/// Energies are clamped to this range before any softmax.
inline constexpr double kEnergyClamp = 30.0;
/// Floor applied to log-probabilities before they are scaled by alpha or (beta - alpha).
inline constexpr double kLogFloor = -30.0;

double logsumexp(const Vec& v);
Vec softmax(const Vec& v);

/**
 * K Gaussian experts pi(theta|c,o), K energy networks phi_o defining
 * pi(c|o) = exp(phi_o(c)) / Z_o, and a fixed uniform prior pi(o) = 1/K.
 *
 * Z_o is approximated on a batch of environment contexts; the gating
 * pi(o|c) follows from Bayes' rule and needs those estimates, so it throws
 * until refresh_normalizers() has run after the latest energy change.
 */
class MixturePolicy {
 public:
  MixturePolicy() = default;
  static MixturePolicy create(const ModelConfig& cfg, int context_dim, int param_dim, std::mt19937_64& rng);
  MixturePolicy(std::vector<Expert> experts, std::vector<DenseNet> energies);

  int num_experts() const { return static_cast<int>(experts_.size()); }
  int context_dim() const { return energies_.front().input_dim(); }
  int param_dim() const { return experts_.front().param_dim(); }
  double prior() const { return 1.0 / num_experts(); }

  const Expert& expert(int o) const;
  Expert& expert(int o);
  const DenseNet& energy_net(int o) const;
  /// Mutable access marks the normalizer estimates stale.
  DenseNet& energy_net_mut(int o);

  /// Clamped energy phi_o(c).
  double energy(int o, const Vec& c) const;
  Vec energies(int o, const Mat& contexts) const;

  /// Softmax of phi_o over the batch (pi(c_i|o) on the batch). Const: no state change.
  Vec curriculum_probs(int o, const ContextBatch& batch) const;
  /// Recompute log_Z[o] = logsumexp(phi_o(batch)) - log N for every expert.
  void refresh_normalizers(const ContextBatch& batch);
  bool normalizers_ready() const { return normalizers_ready_; }
  const Vec& log_normalizers() const { return log_z_; }
  void set_log_normalizers(const Vec& log_z);

  /// log pi(o|c) for all o.
  Vec log_gating(const Vec& c) const;
  Vec gating(const Vec& c) const { return log_gating(c).array().exp(); }
  double gating(const Vec& c, int o) const { return gating(c)[o]; }

  Vec expert_sample(int o, const Vec& c, std::mt19937_64& rng) const;
  double expert_log_prob(int o, const Vec& c, const Vec& theta) const;
  double expert_entropy(int o) const;

  /// log pi(theta|c) = logsumexp_o [log pi(theta|c,o) + log pi(o|c)].
  double mixture_log_prob(const Vec& c, const Vec& theta) const;
  /// pi(o|c,theta) under this model.
  Vec responsibilities(const Vec& c, const Vec& theta) const;

  /// Inference: o ~ pi(o|c) (argmax, lowest index on ties, when deterministic),
  /// then theta ~ pi(theta|c,o) (the mean when deterministic).
  std::pair<int, Vec> act(const Vec& c, std::mt19937_64& rng, bool deterministic) const;

 private:
  void check_expert(int o) const;

  std::vector<Expert> experts_;
  std::vector<DenseNet> energies_;
  Vec log_z_;
  bool normalizers_ready_ = false;
};

/// Frozen copy of the policy at the start of an iteration (pi_old).
class PolicySnapshot {
 public:
  explicit PolicySnapshot(MixturePolicy policy);
  const MixturePolicy& policy() const { return policy_; }

 private:
  MixturePolicy policy_;
};

/// q(o|c,theta) = pi_old(o|c,theta) as a vector over o.
Vec responsibilities(const PolicySnapshot& snapshot, const Vec& c, const Vec& theta);
/// q(o|c) = pi_old(o|c) as a vector over o.
Vec gating_variational(const PolicySnapshot& snapshot, const Vec& c);

/// m draws with replacement from the categorical pi(c|o) over the batch; returns batch indices.
std::vector<int> sample_training_contexts(const MixturePolicy& policy, int o, const ContextBatch& batch, int m,
                                          std::mt19937_64& rng);

}  // namespace diskill

#endif  // DISKILL_MOE_POLICY_HPP
