#ifndef DISKILL_TEST_UTIL_HPP
#define DISKILL_TEST_UTIL_HPP

#include <cmath>
#include <functional>
#include <random>

#include "diskill/moe_policy.hpp"
#include "diskill/nn.hpp"

namespace testutil {

using diskill::Mat;
using diskill::Vec;

/// Central differences, h = 1e-5.
inline Vec numeric_gradient(const std::function<double(const Vec&)>& f, Vec x, double h = 1e-5) {
  Vec g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||, floor).
inline double rel_error(const Vec& a, const Vec& b, double floor = 1e-8) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), floor});
}

inline Vec random_vec(int n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Vec v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

/// Policy with random (non-trivial) energies and a few bias offsets so the
/// gating is far from uniform; normalizers refreshed on a random batch.
inline diskill::MixturePolicy random_policy(int k, int cdim, int pdim, std::mt19937_64& rng,
                                           std::vector<int> hidden = {8, 8}) {
  diskill::ModelConfig mc;
  mc.num_experts = k;
  mc.expert_hidden = hidden;
  mc.energy_hidden = hidden;
  mc.init_std = 0.7;
  auto pol = diskill::MixturePolicy::create(mc, cdim, pdim, rng);
  for (int o = 0; o < k; ++o) {
    auto& e = pol.energy_net_mut(o);
    e.set_flat_params(random_vec(static_cast<int>(e.num_params()), rng, 0.6));
    auto& ex = pol.expert(o);
    ex.mean_net.set_flat_params(random_vec(static_cast<int>(ex.mean_net.num_params()), rng, 0.5));
    ex.chol_raw += random_vec(static_cast<int>(ex.chol_raw.size()), rng, 0.2);
  }
  diskill::ContextBatch batch;
  batch.contexts = Mat::Random(cdim, 64);
  pol.refresh_normalizers(batch);
  return pol;
}

}  // namespace testutil

#endif  // DISKILL_TEST_UTIL_HPP
