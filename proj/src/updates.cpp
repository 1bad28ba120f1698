#include "diskill/updates.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace diskill {

void UpdateConfig::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ConfigError("alpha and beta must be non-negative");
  if (!(eps_mean > 0.0) || !(eps_cov > 0.0)) throw ConfigError("trust-region bounds must be positive");
  if (!(ppo_clip > 0.0 && ppo_clip < 1.0)) throw ConfigError("ppo_clip must lie in (0, 1)");
  if (expert_epochs < 0 || ebm_epochs < 0 || critic_epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(lr_policy > 0.0) || !(lr_ebm > 0.0) || !(lr_critic > 0.0)) throw ConfigError("learning rates must be positive");
  if (samples_per_expert < 1) throw ConfigError("samples_per_expert must be >= 1");
}

ValueCritic ValueCritic::create(int context_dim, const std::vector<int>& hidden, double lr, std::mt19937_64& rng) {
  std::vector<int> dims{context_dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(1);
  ValueCritic critic;
  critic.net = DenseNet::orthogonal(dims, rng);
  critic.adam = AdamState(critic.net.num_params(), lr);
  return critic;
}

double ValueCritic::predict(const Vec& c) const { return target_mean + target_scale * net.forward(c)[0]; }

Vec ValueCritic::predict_batch(const Mat& contexts) const {
  return (target_scale * net.forward_batch(contexts).row(0).transpose()).array() + target_mean;
}

double clamp_log(double log_value) {
  if (std::isnan(log_value)) return kLogFloor;
  return std::max(log_value, kLogFloor);
}

double augmented_return(const RolloutRecord& rec, double alpha) {
  require_shape(rec.expert >= 0 && rec.expert < rec.responsibilities_old.size(),
                "record expert index outside its responsibility vector");
  if (alpha == 0.0) return rec.episodic_return;
  return rec.episodic_return + alpha * clamp_log(std::log(rec.responsibilities_old[rec.expert]));
}

double critic_loss(const ValueCritic& critic, const Mat& contexts, const Vec& targets, Vec* grad) {
  require_shape(contexts.cols() == targets.size() && targets.size() > 0, "critic_loss: batch size mismatch");
  const Vec pred = critic.net.forward_batch(contexts).row(0).transpose();
  const Vec scaled = (targets.array() - critic.target_mean) / critic.target_scale;
  const Vec resid = pred - scaled;
  const double n = static_cast<double>(targets.size());
  if (grad != nullptr) {
    const Mat upstream = (2.0 / n) * resid.transpose();
    *grad = critic.net.backprop_batch(contexts, upstream);
  }
  return resid.squaredNorm() / n;
}

std::vector<double> fit_critic(ValueCritic& critic, const Mat& contexts, const Vec& targets, int epochs) {
  std::vector<double> trace;
  if (epochs <= 0 || targets.size() == 0) return trace;
  if (!targets.allFinite()) throw UpdateAborted("critic targets are not finite");
  critic.target_mean = targets.mean();
  const double sd = std::sqrt((targets.array() - critic.target_mean).square().mean());
  critic.target_scale = sd > 1e-8 ? sd : 1.0;
  Vec params = critic.net.flat_params();
  for (int e = 0; e < epochs; ++e) {
    Vec g;
    const double loss = critic_loss(critic, contexts, targets, &g);
    if (!std::isfinite(loss)) throw UpdateAborted("critic loss became non-finite at epoch " + std::to_string(e));
    trace.push_back(loss);
    adam_step(params, g, critic.adam);
    critic.net.set_flat_params(params);
  }
  return trace;
}

namespace {

Mat record_contexts(const std::vector<RolloutRecord>& records) {
  Mat c(records.front().context.size(), static_cast<Eigen::Index>(records.size()));
  for (std::size_t i = 0; i < records.size(); ++i) c.col(static_cast<Eigen::Index>(i)) = records[i].context;
  return c;
}

}  // namespace

std::vector<double> update_expert_critic(ValueCritic& critic, const std::vector<RolloutRecord>& records,
                                         double alpha, int epochs) {
  if (records.empty()) return {};
  Vec targets(static_cast<Eigen::Index>(records.size()));
  for (std::size_t i = 0; i < records.size(); ++i)
    targets[static_cast<Eigen::Index>(i)] = augmented_return(records[i], alpha);
  return fit_critic(critic, record_contexts(records), targets, epochs);
}

Vec expert_advantages(const std::vector<RolloutRecord>& records, const ValueCritic& critic, double alpha,
                      bool normalize) {
  Vec adv(static_cast<Eigen::Index>(records.size()));
  for (std::size_t i = 0; i < records.size(); ++i)
    adv[static_cast<Eigen::Index>(i)] = augmented_return(records[i], alpha) - critic.predict(records[i].context);
  if (normalize && adv.size() > 0) {
    const double mean = adv.mean();
    const double sd = std::sqrt((adv.array() - mean).square().mean());
    adv = (adv.array() - mean) / std::max(sd, 1e-8);
  }
  return adv;
}

double expert_surrogate(const Expert& expert, const std::vector<RolloutRecord>& records, const Vec& advantages,
                        double alpha, Vec* grad) {
  require_shape(advantages.size() == static_cast<Eigen::Index>(records.size()), "one advantage per record required");
  const int d = expert.param_dim();
  const Mat chol = expert.chol();
  const double entropy = gaussian_entropy({Vec::Zero(d), chol});
  if (records.empty()) {
    if (grad != nullptr) {
      *grad = Vec::Zero(static_cast<Eigen::Index>(expert.num_params()));
      grad->tail(expert.chol_raw.size()) = alpha * chol_grad_to_raw(Mat(chol.diagonal().cwiseInverse().asDiagonal()),
                                                                    expert.chol_raw, d);
    }
    return alpha * entropy;
  }
  const auto n = static_cast<Eigen::Index>(records.size());
  const Mat contexts = record_contexts(records);
  const Mat means = expert.mean_net.forward_batch(contexts);
  Mat upstream(d, n);
  Mat d_chol = Mat::Zero(d, d);
  double value = 0.0;
  LogProbGrad lg;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& rec = records[static_cast<std::size_t>(i)];
    const double logp = gaussian_log_prob({means.col(i), chol}, rec.theta, lg);
    const double ratio = std::exp(logp - rec.log_prob_old);
    const double w = ratio * advantages[i] / static_cast<double>(n);
    value += w;
    upstream.col(i) = w * lg.d_mean;
    d_chol += w * lg.d_chol;
  }
  value += alpha * entropy;
  if (grad != nullptr) {
    d_chol.diagonal() += alpha * chol.diagonal().cwiseInverse();
    Vec g(static_cast<Eigen::Index>(expert.num_params()));
    g.head(static_cast<Eigen::Index>(expert.mean_net.num_params())) = expert.mean_net.backprop_batch(contexts, upstream);
    g.tail(expert.chol_raw.size()) = chol_grad_to_raw(d_chol, expert.chol_raw, d);
    *grad = std::move(g);
  }
  return value;
}

std::vector<KlParts> expert_kl(const Expert& expert, const Expert& old_expert, const Mat& contexts) {
  const Mat new_means = expert.mean_net.forward_batch(contexts);
  const Mat old_means = old_expert.mean_net.forward_batch(contexts);
  const Mat new_chol = expert.chol();
  const Mat old_chol = old_expert.chol();
  std::vector<KlParts> out;
  out.reserve(static_cast<std::size_t>(contexts.cols()));
  for (Eigen::Index i = 0; i < contexts.cols(); ++i)
    out.push_back(gaussian_kl({new_means.col(i), new_chol}, {old_means.col(i), old_chol}));
  return out;
}

TrustRegionReport project_trust_region(Expert& expert, const Expert& old_expert, const Mat& contexts,
                                       double eps_mean, double eps_cov) {
  constexpr double kSlack = 1.0 + 1e-3;
  TrustRegionReport report;
  const int d = expert.param_dim();
  const auto old_lower = old_expert.chol();
  const Mat old_means = old_expert.mean_net.forward_batch(contexts);

  auto max_mean_kl = [&](const DenseNet& net) {
    const Mat diff = net.forward_batch(contexts) - old_means;
    const Mat z = old_lower.triangularView<Eigen::Lower>().solve(diff);
    return contexts.cols() > 0 ? 0.5 * z.colwise().squaredNorm().maxCoeff() : 0.0;
  };

  // Mean: one global scale on the network's parameter step.
  double mm = max_mean_kl(expert.mean_net);
  if (mm > eps_mean) {
    const Vec old_p = old_expert.mean_net.flat_params();
    const Vec step = expert.mean_net.flat_params() - old_p;
    double s = std::sqrt(eps_mean / mm);
    bool ok = false;
    for (int it = 0; it < 30; ++it) {
      expert.mean_net.set_flat_params(old_p + s * step);
      mm = max_mean_kl(expert.mean_net);
      if (mm <= eps_mean * kSlack) {
        ok = true;
        break;
      }
      s *= std::sqrt(eps_mean / mm) * 0.999;
    }
    if (!ok) {
      s = 0.0;
      expert.mean_net.set_flat_params(old_p);
    }
    report.mean_scale = s;
  }

  // Covariance: interpolate the Cholesky factor, bisecting the weight.
  const Mat new_chol = expert.chol();
  auto cov_kl = [&](const Mat& l) {
    return gaussian_kl({Vec::Zero(d), l}, {Vec::Zero(d), old_lower}).cov_part;
  };
  if (cov_kl(new_chol) > eps_cov) {
    const Mat delta = new_chol - old_lower;
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (cov_kl(old_lower + mid * delta) <= eps_cov)
        lo = mid;
      else
        hi = mid;
    }
    expert.chol_raw = raw_from_chol(old_lower + lo * delta);
    report.cov_scale = lo;
  }

  for (const auto& kl : expert_kl(expert, old_expert, contexts)) {
    report.max_mean_kl = std::max(report.max_mean_kl, kl.mean_part);
    report.max_cov_kl = std::max(report.max_cov_kl, kl.cov_part);
    report.max_kl = std::max(report.max_kl, kl.total);
  }
  return report;
}

ExpertUpdateReport update_expert(MixturePolicy& policy, const PolicySnapshot& snapshot, int o,
                                 const std::vector<RolloutRecord>& records, const Vec& advantages,
                                 const UpdateConfig& cfg, AdamState& adam) {
  for (const auto& r : records) require_shape(r.expert == o, "update_expert: record belongs to another expert");
  Expert& expert = policy.expert(o);
  const Expert& old_expert = snapshot.policy().expert(o);
  ExpertUpdateReport report;
  const Mat contexts = records.empty() ? Mat(policy.context_dim(), 0) : record_contexts(records);
  for (int e = 0; e < cfg.expert_epochs; ++e) {
    Vec g;
    const double value = expert_surrogate(expert, records, advantages, cfg.alpha, &g);
    if (!std::isfinite(value) || !g.allFinite()) {
      std::ostringstream msg;
      msg << "expert " << o << " surrogate non-finite at epoch " << e << " (value " << value << ", entropy "
          << policy.expert_entropy(o) << ")";
      throw UpdateAborted(msg.str());
    }
    report.surrogate = value;
    Vec params = expert.flat_params();
    adam_step(params, -g, adam);
    expert.set_flat_params(params);
    report.trust_region = project_trust_region(expert, old_expert, contexts, cfg.eps_mean, cfg.eps_cov);
  }
  report.entropy = policy.expert_entropy(o);
  return report;
}

ContextPayoffs context_payoff_Lc(const std::vector<RolloutRecord>& records, double alpha, double expert_entropy) {
  std::map<int, std::pair<double, int>> acc;  // batch index -> (sum augmented, count)
  std::map<int, Vec> ctx;
  for (const auto& r : records) {
    if (r.batch_index < 0) throw ShapeError("context payoff needs records indexed into the environment batch");
    auto& a = acc[r.batch_index];
    a.first += augmented_return(r, alpha);
    a.second += 1;
    ctx.emplace(r.batch_index, r.context);
  }
  ContextPayoffs out;
  const auto n = static_cast<Eigen::Index>(acc.size());
  out.contexts.resize(records.empty() ? 0 : records.front().context.size(), n);
  out.counts.resize(n);
  out.lc.resize(n);
  out.log_gating = Vec::Zero(n);
  Eigen::Index i = 0;
  for (const auto& [idx, a] : acc) {
    out.batch_index.push_back(idx);
    out.contexts.col(i) = ctx.at(idx);
    out.counts[i] = a.second;
    out.lc[i] = a.first / a.second + alpha * expert_entropy;
    ++i;
  }
  out.targets = out.lc;
  return out;
}

void attach_context_terms(ContextPayoffs& payoffs, const std::vector<RolloutRecord>& records,
                          const UpdateConfig& cfg) {
  std::map<int, double> log_q;
  for (const auto& r : records) log_q[r.batch_index] = clamp_log(r.log_gating_old);
  for (int i = 0; i < payoffs.size(); ++i) {
    const double lq = cfg.use_gating_variational ? log_q.at(payoffs.batch_index[static_cast<std::size_t>(i)]) : 0.0;
    payoffs.log_gating[i] = lq;
    payoffs.targets[i] = payoffs.lc[i] + (cfg.beta - cfg.alpha) * lq;
  }
}

std::vector<double> update_context_critic(ValueCritic& critic, const ContextPayoffs& payoffs, int epochs) {
  if (payoffs.size() == 0) return {};
  return fit_critic(critic, payoffs.contexts, payoffs.targets, epochs);
}

Vec context_advantages(const ContextPayoffs& payoffs, const ValueCritic& critic) {
  if (payoffs.size() == 0) return Vec(0);
  return payoffs.targets - critic.predict_batch(payoffs.contexts);
}

double categorical_entropy(const Vec& p) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
  return h;
}

double ebm_surrogate(const DenseNet& energy, const Mat& batch_contexts, const Vec& old_probs,
                     const std::vector<int>& executed, const Vec& weights, const Vec& advantages, double beta,
                     double clip, Vec* grad) {
  const auto n = batch_contexts.cols();
  require_shape(old_probs.size() == n, "ebm_surrogate: old probabilities must cover the batch");
  require_shape(weights.size() == static_cast<Eigen::Index>(executed.size()) &&
                    advantages.size() == weights.size(),
                "ebm_surrogate: one weight and advantage per executed context");
  const Vec raw = energy.forward_batch(batch_contexts).row(0).transpose();
  if (!raw.allFinite()) throw UpdateAborted("energy network produced non-finite energies");
  const Vec e = raw.cwiseMax(-kEnergyClamp).cwiseMin(kEnergyClamp);
  const Vec p = softmax(e);
  const double h = categorical_entropy(p);
  const double total_w = weights.sum();

  double value = beta * h;
  Vec g_e = Vec::Zero(n);
  double coef_sum = 0.0;
  for (std::size_t k = 0; k < executed.size(); ++k) {
    const int j = executed[k];
    require_shape(j >= 0 && j < n, "ebm_surrogate: executed index outside batch");
    const auto ki = static_cast<Eigen::Index>(k);
    const double ratio = p[j] / old_probs[j];
    const double a = advantages[ki];
    const double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
    const double w = total_w > 0.0 ? weights[ki] / total_w : 0.0;
    const double unclipped_term = ratio * a;
    const double clipped_term = clipped * a;
    value += w * std::min(unclipped_term, clipped_term);
    if (unclipped_term <= clipped_term) {
      // d ratio / d e_m = ratio * (delta_jm - p_m)
      const double c = w * a * ratio;
      g_e[j] += c;
      coef_sum += c;
    }
  }
  if (grad != nullptr) {
    g_e -= coef_sum * p;
    const Vec logp = p.array().max(1e-300).log();
    g_e.array() -= beta * p.array() * (logp.array() + h);
    for (Eigen::Index j = 0; j < n; ++j)
      if (raw[j] <= -kEnergyClamp || raw[j] >= kEnergyClamp) g_e[j] = 0.0;
    *grad = energy.backprop_batch(batch_contexts, g_e.transpose());
  }
  return value;
}

EbmUpdateReport update_context_ebm(DenseNet& net, const PolicySnapshot& snapshot, int o,
                                   const ContextBatch& env_batch, const ContextPayoffs& payoffs,
                                   const Vec& advantages, const UpdateConfig& cfg, AdamState& adam) {
  EbmUpdateReport report;
  const Vec old_probs = snapshot.policy().curriculum_probs(o, env_batch);
  Vec params = net.flat_params();
  for (int e = 0; e < cfg.ebm_epochs; ++e) {
    Vec g;
    const double value = ebm_surrogate(net, env_batch.contexts, old_probs, payoffs.batch_index, payoffs.counts,
                                       advantages, cfg.beta, cfg.ppo_clip, &g);
    if (!std::isfinite(value) || !g.allFinite())
      throw UpdateAborted("context distribution of expert " + std::to_string(o) + " diverged at epoch " +
                          std::to_string(e));
    report.surrogate = value;
    adam_step(params, -g, adam);
    net.set_flat_params(params);
  }
  const Vec e = net.forward_batch(env_batch.contexts).row(0).transpose();
  report.entropy = categorical_entropy(softmax(e.cwiseMax(-kEnergyClamp).cwiseMin(kEnergyClamp)));
  return report;
}

}  // namespace diskill
