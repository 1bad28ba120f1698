#include "diskill/moe_policy.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "diskill/errors.hpp"

namespace diskill {

Vec Expert::flat_params() const {
  Vec out(static_cast<Eigen::Index>(num_params()));
  const auto n = static_cast<Eigen::Index>(mean_net.num_params());
  out.head(n) = mean_net.flat_params();
  out.tail(chol_raw.size()) = chol_raw;
  return out;
}

void Expert::set_flat_params(const Vec& flat) {
  require_shape(flat.size() == static_cast<Eigen::Index>(num_params()), "expert parameter length mismatch");
  const auto n = static_cast<Eigen::Index>(mean_net.num_params());
  mean_net.set_flat_params(flat.head(n));
  chol_raw = flat.tail(chol_raw.size());
}

double logsumexp(const Vec& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

Vec softmax(const Vec& v) {
  const double m = v.maxCoeff();
  Vec e = (v.array() - m).exp();
  return e / e.sum();
}

MixturePolicy MixturePolicy::create(const ModelConfig& cfg, int context_dim, int param_dim,
                                    std::mt19937_64& rng) {
  if (cfg.num_experts < 1) throw ConfigError("num_experts must be >= 1");
  if (!(cfg.init_std > 0.0)) throw ConfigError("init_std must be positive");
  std::vector<Expert> experts;
  std::vector<DenseNet> energies;
  auto dims = [context_dim](const std::vector<int>& hidden, int out) {
    std::vector<int> d{context_dim};
    d.insert(d.end(), hidden.begin(), hidden.end());
    d.push_back(out);
    return d;
  };
  for (int o = 0; o < cfg.num_experts; ++o) {
    Expert e;
    e.mean_net = DenseNet::orthogonal(dims(cfg.expert_hidden, param_dim), rng);
    e.chol_raw = raw_from_chol(cfg.init_std * Mat::Identity(param_dim, param_dim));
    experts.push_back(std::move(e));
  }
  for (int o = 0; o < cfg.num_experts; ++o)
    energies.push_back(DenseNet::orthogonal(dims(cfg.energy_hidden, 1), rng));
  return MixturePolicy(std::move(experts), std::move(energies));
}

MixturePolicy::MixturePolicy(std::vector<Expert> experts, std::vector<DenseNet> energies)
    : experts_(std::move(experts)), energies_(std::move(energies)) {
  if (experts_.empty() || experts_.size() != energies_.size())
    throw ConfigError("mixture needs K >= 1 experts and one energy network per expert");
  for (const auto& e : experts_) {
    require_shape(e.param_dim() == experts_.front().param_dim(), "experts disagree on parameter dimension");
    require_shape(e.mean_net.input_dim() == energies_.front().input_dim(), "expert context dimension mismatch");
    require_shape(e.chol_raw.size() == chol_param_count(e.param_dim()), "expert Cholesky size mismatch");
  }
  for (const auto& net : energies_) {
    require_shape(net.output_dim() == 1, "energy networks must output a scalar");
    require_shape(net.input_dim() == energies_.front().input_dim(), "energy context dimension mismatch");
  }
  log_z_ = Vec::Zero(num_experts());
}

void MixturePolicy::check_expert(int o) const {
  if (o < 0 || o >= num_experts())
    throw std::out_of_range("expert index " + std::to_string(o) + " out of range");
}

const Expert& MixturePolicy::expert(int o) const {
  check_expert(o);
  return experts_[static_cast<std::size_t>(o)];
}

Expert& MixturePolicy::expert(int o) {
  check_expert(o);
  return experts_[static_cast<std::size_t>(o)];
}

const DenseNet& MixturePolicy::energy_net(int o) const {
  check_expert(o);
  return energies_[static_cast<std::size_t>(o)];
}

DenseNet& MixturePolicy::energy_net_mut(int o) {
  check_expert(o);
  normalizers_ready_ = false;
  return energies_[static_cast<std::size_t>(o)];
}

double MixturePolicy::energy(int o, const Vec& c) const {
  const double e = energy_net(o).forward(c)[0];
  if (!std::isfinite(e)) throw NumericError("non-finite energy for expert " + std::to_string(o));
  return std::clamp(e, -kEnergyClamp, kEnergyClamp);
}

Vec MixturePolicy::energies(int o, const Mat& contexts) const {
  Vec e = energy_net(o).forward_batch(contexts).row(0).transpose();
  if (!e.allFinite()) throw NumericError("non-finite energy for expert " + std::to_string(o));
  return e.cwiseMax(-kEnergyClamp).cwiseMin(kEnergyClamp);
}

Vec MixturePolicy::curriculum_probs(int o, const ContextBatch& batch) const {
  require_shape(batch.size() >= 1, "curriculum_probs: empty batch");
  return softmax(energies(o, batch.contexts));
}

void MixturePolicy::refresh_normalizers(const ContextBatch& batch) {
  require_shape(batch.size() >= 1, "refresh_normalizers: empty batch");
  const double log_n = std::log(static_cast<double>(batch.size()));
  for (int o = 0; o < num_experts(); ++o) log_z_[o] = logsumexp(energies(o, batch.contexts)) - log_n;
  normalizers_ready_ = true;
}

void MixturePolicy::set_log_normalizers(const Vec& log_z) {
  require_shape(log_z.size() == num_experts(), "normalizer vector length != K");
  if (!log_z.allFinite()) throw NumericError("normalizer estimates must be finite");
  log_z_ = log_z;
  normalizers_ready_ = true;
}

Vec MixturePolicy::log_gating(const Vec& c) const {
  if (!normalizers_ready_)
    throw std::logic_error("gating requires normalizer estimates from a fresh context batch");
  Vec logits(num_experts());
  for (int o = 0; o < num_experts(); ++o) logits[o] = energy(o, c) - log_z_[o];
  return logits.array() - logsumexp(logits);
}

Vec MixturePolicy::expert_sample(int o, const Vec& c, std::mt19937_64& rng) const {
  return gaussian_sample(expert(o).distribution(c), rng);
}

double MixturePolicy::expert_log_prob(int o, const Vec& c, const Vec& theta) const {
  return gaussian_log_prob(expert(o).distribution(c), theta);
}

double MixturePolicy::expert_entropy(int o) const {
  const Expert& e = expert(o);
  return gaussian_entropy({Vec::Zero(e.param_dim()), e.chol()});
}

double MixturePolicy::mixture_log_prob(const Vec& c, const Vec& theta) const {
  const Vec lg = log_gating(c);
  Vec terms(num_experts());
  for (int o = 0; o < num_experts(); ++o) terms[o] = expert_log_prob(o, c, theta) + lg[o];
  return logsumexp(terms);
}

Vec MixturePolicy::responsibilities(const Vec& c, const Vec& theta) const {
  const Vec lg = log_gating(c);
  Vec terms(num_experts());
  for (int o = 0; o < num_experts(); ++o) terms[o] = expert_log_prob(o, c, theta) + lg[o];
  return softmax(terms);
}

std::pair<int, Vec> MixturePolicy::act(const Vec& c, std::mt19937_64& rng, bool deterministic) const {
  const Vec g = gating(c);
  int o = 0;
  if (deterministic) {
    for (int k = 1; k < num_experts(); ++k)
      if (g[k] > g[o]) o = k;
    return {o, expert(o).mean_net.forward(c)};
  }
  std::discrete_distribution<int> pick(g.data(), g.data() + g.size());
  o = pick(rng);
  return {o, expert_sample(o, c, rng)};
}

PolicySnapshot::PolicySnapshot(MixturePolicy policy) : policy_(std::move(policy)) {
  if (!policy_.normalizers_ready())
    throw std::logic_error("snapshot requires normalizer estimates");
}

Vec responsibilities(const PolicySnapshot& snapshot, const Vec& c, const Vec& theta) {
  return snapshot.policy().responsibilities(c, theta);
}

Vec gating_variational(const PolicySnapshot& snapshot, const Vec& c) { return snapshot.policy().gating(c); }

std::vector<int> sample_training_contexts(const MixturePolicy& policy, int o, const ContextBatch& batch, int m,
                                          std::mt19937_64& rng) {
  if (m < 1) throw ConfigError("sample_training_contexts: m must be >= 1");
  const Vec p = policy.curriculum_probs(o, batch);
  std::discrete_distribution<int> pick(p.data(), p.data() + p.size());
  std::vector<int> idx(static_cast<std::size_t>(m));
  for (auto& i : idx) i = pick(rng);
  return idx;
}

}  // namespace diskill
