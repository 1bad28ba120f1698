#ifndef DISKILL_UPDATES_HPP
#define DISKILL_UPDATES_HPP

#include <random>
#include <string>
#include <vector>

#include "diskill/errors.hpp"
#include "diskill/moe_policy.hpp"
#include "diskill/nn.hpp"

namespace diskill {

/// One executed episode plus the snapshot quantities the updates consume.
struct RolloutRecord {
  int expert = 0;
  int batch_index = -1;  // column of the iteration's environment batch
  Vec context;
  Vec theta;
  double episodic_return = 0.0;
  double log_prob_old = 0.0;    // log pi_old(theta|c,o)
  Vec responsibilities_old;     // q(o'|c,theta) for all o'
  double log_gating_old = 0.0;  // log q(o|c) for the record's own o
  bool success = false;
};

struct UpdateConfig {
  double alpha = 0.01;
  double beta = 8.0;
  double eps_mean = 0.05;
  double eps_cov = 0.001;
  double ppo_clip = 0.2;
  int expert_epochs = 100;
  int ebm_epochs = 100;
  int critic_epochs = 100;
  double lr_policy = 3e-4;
  double lr_ebm = 1e-4;
  double lr_critic = 3e-4;
  int samples_per_expert = 25;
  bool normalize_advantages = true;
  /// Ablation switch: false replaces log q(o|c) by 0 in the context objective.
  bool use_gating_variational = true;

  void validate() const;
};

/// Thrown when an update produces non-finite values; carries diagnostics.
struct UpdateAborted : NumericError {
  using NumericError::NumericError;
};

/**
 * Scalar value function V(c) = target_mean + target_scale * net(c).
 *
 * Each non-empty fit re-standardizes against the current targets, so the
 * network always regresses zero-mean, unit-variance values.
 */
struct ValueCritic {
  DenseNet net;
  double target_mean = 0.0;
  double target_scale = 1.0;
  AdamState adam;

  static ValueCritic create(int context_dim, const std::vector<int>& hidden, double lr, std::mt19937_64& rng);
  double predict(const Vec& c) const;
  Vec predict_batch(const Mat& contexts) const;
};

/// Per-expert baselines: one for the expert objective, one for the context objective.
struct CriticPair {
  ValueCritic expert;
  ValueCritic context;
};

double clamp_log(double log_value);

/// R + alpha * log q(o|c,theta), log floored at -30.
double augmented_return(const RolloutRecord& rec, double alpha);

/// Standardized MSE (in the critic's current target scaling) and its gradient.
double critic_loss(const ValueCritic& critic, const Mat& contexts, const Vec& targets, Vec* grad);
/// Full-batch Adam regression for `epochs` steps; returns the loss before each step.
std::vector<double> fit_critic(ValueCritic& critic, const Mat& contexts, const Vec& targets, int epochs);

/// Regress V_o^theta(c) onto augmented returns.
std::vector<double> update_expert_critic(ValueCritic& critic, const std::vector<RolloutRecord>& records,
                                         double alpha, int epochs);

/// A = augmented return - V(c), optionally standardized (sigma floor 1e-8).
Vec expert_advantages(const std::vector<RolloutRecord>& records, const ValueCritic& critic, double alpha,
                      bool normalize);

/// mean_i ratio_i * A_i + alpha * H[expert]; gradient w.r.t. the expert's flat parameters.
double expert_surrogate(const Expert& expert, const std::vector<RolloutRecord>& records, const Vec& advantages,
                        double alpha, Vec* grad);

struct TrustRegionReport {
  double mean_scale = 1.0;  // applied to the mean-network parameter step
  double cov_scale = 1.0;   // Cholesky interpolation weight
  double max_mean_kl = 0.0;
  double max_cov_kl = 0.0;
  double max_kl = 0.0;  // max over contexts of the total KL
};

/// Per-context KL parts of `expert` against `old_expert` at each column of `contexts`.
std::vector<KlParts> expert_kl(const Expert& expert, const Expert& old_expert, const Mat& contexts);

/// Scale the mean-network step and interpolate the Cholesky factor until every
/// context satisfies mean KL <= eps_mean and covariance KL <= eps_cov (relative slack 1e-3).
TrustRegionReport project_trust_region(Expert& expert, const Expert& old_expert, const Mat& contexts,
                                       double eps_mean, double eps_cov);

struct ExpertUpdateReport {
  double surrogate = 0.0;
  double entropy = 0.0;
  TrustRegionReport trust_region;
};

/// Ascend the expert surrogate for cfg.expert_epochs Adam steps, projecting after each.
ExpertUpdateReport update_expert(MixturePolicy& policy, const PolicySnapshot& snapshot, int o,
                                 const std::vector<RolloutRecord>& records, const Vec& advantages,
                                 const UpdateConfig& cfg, AdamState& adam);

/// Executed contexts of one expert, deduplicated by batch index.
struct ContextPayoffs {
  std::vector<int> batch_index;
  Mat contexts;      // dim x n_unique
  Vec counts;        // number of episodes per context
  Vec lc;            // L_c(o, c)
  Vec log_gating;    // floored log q(o|c), or 0 with the ablation switch
  Vec targets;       // L_c + (beta - alpha) * log_gating

  int size() const { return static_cast<int>(batch_index.size()); }
};

/// L_c(o,c) = mean augmented return over the context's episodes + alpha * H[expert].
ContextPayoffs context_payoff_Lc(const std::vector<RolloutRecord>& records, double alpha, double expert_entropy);
/// Fill log_gating and targets from the records' snapshot gating.
void attach_context_terms(ContextPayoffs& payoffs, const std::vector<RolloutRecord>& records, const UpdateConfig& cfg);

std::vector<double> update_context_critic(ValueCritic& critic, const ContextPayoffs& payoffs, int epochs);

/// payoff = L_c + (beta - alpha) log q(o|c) - V^c(c)
Vec context_advantages(const ContextPayoffs& payoffs, const ValueCritic& critic);

/// -sum p log p
double categorical_entropy(const Vec& p);

/// sum_i w_i min(r_i A_i, clip(r_i) A_i) / sum_i w_i + beta * H[softmax(phi over batch)],
/// r_i = p_new(c_i) / p_old(c_i). Gradient w.r.t. the energy network's flat parameters.
double ebm_surrogate(const DenseNet& energy, const Mat& batch_contexts, const Vec& old_probs,
                     const std::vector<int>& executed, const Vec& weights, const Vec& advantages, double beta,
                     double clip, Vec* grad);

struct EbmUpdateReport {
  double surrogate = 0.0;
  double entropy = 0.0;  // categorical entropy over the batch after the update
};

/// Ascend the clipped EBM surrogate for cfg.ebm_epochs Adam steps. `energy` is
/// expert o's network (updated in place); the snapshot supplies pi_old(c|o).
EbmUpdateReport update_context_ebm(DenseNet& energy, const PolicySnapshot& snapshot, int o,
                                   const ContextBatch& env_batch, const ContextPayoffs& payoffs,
                                   const Vec& advantages, const UpdateConfig& cfg, AdamState& adam);

}  // namespace diskill

#endif  // DISKILL_UPDATES_HPP
