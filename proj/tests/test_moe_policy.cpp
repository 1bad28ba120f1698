#include <doctest.h>

#include <cmath>

#include "diskill/errors.hpp"
#include "diskill/moe_policy.hpp"
#include "test_util.hpp"

using namespace diskill;

namespace {

ContextBatch make_batch(const Mat& m) {
  ContextBatch b;
  b.contexts = m;
  return b;
}

}  // namespace

TEST_CASE("curriculum probabilities: softmax examples and shift invariance") {
  std::mt19937_64 rng(1);
  ModelConfig mc;
  mc.num_experts = 1;
  mc.energy_hidden = {};
  auto pol = MixturePolicy::create(mc, 1, 2, rng);
  auto& e = pol.energy_net_mut(0);
  e.layer(0).weight.setZero();
  e.layer(0).bias.setZero();
  const auto batch = make_batch((Mat(1, 4) << 0, 1, 2, 3).finished());
  const Vec uniform = pol.curriculum_probs(0, batch);
  for (int i = 0; i < 4; ++i) CHECK(uniform[i] == doctest::Approx(0.25).epsilon(1e-15));

  // energy = ln2 * [c == 0] via a linear net: phi(c) = -ln2 * c + ln2 on {0,1,2,3} is not one-hot,
  // so use a step-shaped batch instead: contexts 1,0,0,0 with weight ln2.
  e.layer(0).weight(0, 0) = std::log(2.0);
  const auto batch2 = make_batch((Mat(1, 4) << 1, 0, 0, 0).finished());
  const Vec p = pol.curriculum_probs(0, batch2);
  CHECK(p[0] == doctest::Approx(0.4).epsilon(1e-12));
  for (int i = 1; i < 4; ++i) CHECK(p[i] == doctest::Approx(0.2).epsilon(1e-12));

  e.layer(0).bias[0] = 3.7;
  const Vec shifted = pol.curriculum_probs(0, batch2);
  CHECK((shifted - p).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("normalizers: stale estimates are refused, refresh stores logsumexp - log N") {
  std::mt19937_64 rng(2);
  ModelConfig mc;
  mc.num_experts = 3;
  auto pol = MixturePolicy::create(mc, 2, 4, rng);
  const Vec c = Vec::Zero(2);
  CHECK_THROWS_AS(pol.log_gating(c), std::logic_error);
  const auto batch = make_batch(Mat::Random(2, 50));
  pol.refresh_normalizers(batch);
  CHECK(pol.normalizers_ready());
  for (int o = 0; o < 3; ++o) {
    const Vec en = pol.energies(o, batch.contexts);
    CHECK(pol.log_normalizers()[o] == doctest::Approx(logsumexp(en) - std::log(50.0)).epsilon(1e-12));
  }
  pol.energy_net_mut(1);
  CHECK_FALSE(pol.normalizers_ready());
  CHECK_THROWS_AS(pol.log_gating(c), std::logic_error);
}

TEST_CASE("gating and responsibilities against brute-force Bayes") {
  std::mt19937_64 rng(3);
  for (int k : {1, 2, 4, 8}) {
    for (int trial = 0; trial < 5; ++trial) {
      auto pol = testutil::random_policy(k, 2, 3, rng);
      const auto batch = make_batch(Mat::Random(2, 40));
      pol.refresh_normalizers(batch);
      // Z_o as the batch mean of exp(phi)
      Vec z(k);
      for (int o = 0; o < k; ++o) z[o] = pol.energies(o, batch.contexts).array().exp().mean();
      for (int rep = 0; rep < 5; ++rep) {
        const Vec c = Vec::Random(2);
        const Vec theta = testutil::random_vec(3, rng);
        Vec joint_c(k), joint_ct(k);
        for (int o = 0; o < k; ++o) {
          const double pc_o = std::exp(pol.energy(o, c)) / z[o];
          joint_c[o] = pc_o / k;
          joint_ct[o] = joint_c[o] * std::exp(pol.expert_log_prob(o, c, theta));
        }
        const Vec gating_oracle = joint_c / joint_c.sum();
        const Vec resp_oracle = joint_ct / joint_ct.sum();
        const Vec g = pol.gating(c);
        const Vec r = pol.responsibilities(c, theta);
        CHECK(std::abs(g.sum() - 1.0) < 1e-9);
        CHECK(std::abs(r.sum() - 1.0) < 1e-9);
        CHECK((g - gating_oracle).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((r - resp_oracle).cwiseAbs().maxCoeff() < 1e-10);
        CHECK(pol.mixture_log_prob(c, theta) == doctest::Approx(std::log(joint_ct.sum() / joint_c.sum())).epsilon(1e-10));
        if (k == 1) {
          CHECK(g[0] == 1.0);
          CHECK(r[0] == 1.0);
        }
      }
    }
  }
}

TEST_CASE("two-expert responsibility example") {
  // equal gating, expert log-probs -1 and -2
  const Vec logits = (Vec(2) << -1.0 + std::log(0.5), -2.0 + std::log(0.5)).finished();
  const Vec r = softmax(logits);
  CHECK(r[0] == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(r[1] == doctest::Approx(0.2689).epsilon(1e-4));
}

TEST_CASE("gating is invariant to a common energy shift; identical experts give uniform values") {
  std::mt19937_64 rng(4);
  auto pol = testutil::random_policy(3, 2, 2, rng);
  const auto batch = make_batch(Mat::Random(2, 30));
  pol.refresh_normalizers(batch);
  const Vec c = Vec::Random(2);
  const Vec g0 = pol.gating(c);
  for (int o = 0; o < 3; ++o) pol.energy_net_mut(o).layer(pol.energy_net(o).num_layers() - 1).bias[0] += 1.25;
  pol.refresh_normalizers(batch);
  CHECK((pol.gating(c) - g0).cwiseAbs().maxCoeff() < 1e-9);

  std::vector<Expert> experts(4, pol.expert(0));
  std::vector<DenseNet> energies(4, pol.energy_net(0));
  MixturePolicy same(experts, energies);
  same.refresh_normalizers(batch);
  const Vec theta = testutil::random_vec(2, rng);
  CHECK((same.gating(c).array() - 0.25).abs().maxCoeff() < 1e-12);
  CHECK((same.responsibilities(c, theta).array() - 0.25).abs().maxCoeff() < 1e-12);
}

TEST_CASE("snapshot values do not follow later policy changes") {
  std::mt19937_64 rng(5);
  auto pol = testutil::random_policy(3, 2, 2, rng);
  const PolicySnapshot snap(pol);
  const Vec c = Vec::Random(2);
  const Vec theta = testutil::random_vec(2, rng);
  const Vec q_ct = responsibilities(snap, c, theta);
  const Vec q_c = gating_variational(snap, c);
  pol.expert(1).mean_net.set_flat_params(pol.expert(1).mean_net.flat_params() * 3.0);
  pol.energy_net_mut(0).set_flat_params(pol.energy_net(0).flat_params() * -2.0);
  CHECK(responsibilities(snap, c, theta) == q_ct);
  CHECK(gating_variational(snap, c) == q_c);
  CHECK(q_c == snap.policy().gating(c));
}

TEST_CASE("expert sampling, scoring and entropy") {
  std::mt19937_64 rng(6);
  auto pol = testutil::random_policy(2, 2, 3, rng);
  const Vec c = Vec::Random(2);
  const Vec mu = pol.expert(1).mean_net.forward(c);
  const double at_mean = pol.expert_log_prob(1, c, mu);
  for (int i = 0; i < 20; ++i) CHECK(pol.expert_log_prob(1, c, mu + 0.1 * testutil::random_vec(3, rng)) < at_mean);
  CHECK(pol.expert_entropy(1) == gaussian_entropy(pol.expert(1).distribution(c)));

  const int n = 100000;
  Vec sum = Vec::Zero(3);
  for (int i = 0; i < n; ++i) sum += pol.expert_sample(1, c, rng);
  const Vec mean = sum / n;
  const Mat cov = pol.expert(1).distribution(c).covariance();
  for (int i = 0; i < 3; ++i) CHECK(std::abs(mean[i] - mu[i]) < 4 * std::sqrt(cov(i, i) / n));
  CHECK_THROWS(pol.expert_log_prob(2, c, mu));
}

TEST_CASE("training-context sampling") {
  std::mt19937_64 rng(7);
  ModelConfig mc;
  mc.num_experts = 1;
  mc.energy_hidden = {};
  auto pol = MixturePolicy::create(mc, 1, 2, rng);
  pol.energy_net_mut(0).layer(0).weight.setZero();
  const int n = 10;
  const auto batch = make_batch(Mat(Vec::LinSpaced(n, 0, 1).transpose()));
  const int m = 100000;
  const auto idx = sample_training_contexts(pol, 0, batch, m, rng);
  CHECK(idx.size() == static_cast<std::size_t>(m));
  std::vector<int> counts(n, 0);
  for (int i : idx) ++counts[static_cast<std::size_t>(i)];
  const double sd = std::sqrt(m * 0.1 * 0.9);
  for (int cnt : counts) CHECK(std::abs(cnt - m * 0.1) < 4 * sd);

  // one context dominates through saturated energies
  pol.energy_net_mut(0).layer(0).weight(0, 0) = 1000.0;
  pol.energy_net_mut(0).layer(0).bias[0] = -970.0;  // +30 at c=1, clamped -30 elsewhere
  const auto peaked = sample_training_contexts(pol, 0, batch, 200, rng);
  for (int i : peaked) CHECK(i == n - 1);

  std::mt19937_64 a(1), b(1);
  CHECK(sample_training_contexts(pol, 0, batch, 50, a) == sample_training_contexts(pol, 0, batch, 50, b));
}

TEST_CASE("act: argmax with lowest-index ties, stochastic frequencies follow gating") {
  std::mt19937_64 rng(8);
  auto pol = testutil::random_policy(3, 2, 2, rng);
  const Vec c = Vec::Random(2);
  const auto [o1, t1] = pol.act(c, rng, true);
  const auto [o2, t2] = pol.act(c, rng, true);
  CHECK(o1 == o2);
  CHECK(t1 == t2);
  const Vec g = pol.gating(c);
  Eigen::Index best;
  g.maxCoeff(&best);
  CHECK(o1 == best);
  CHECK(t1 == pol.expert(o1).mean_net.forward(c));

  const int n = 10000;
  std::vector<int> counts(3, 0);
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(pol.act(c, rng, false).first)];
  for (int o = 0; o < 3; ++o) CHECK(std::abs(counts[static_cast<std::size_t>(o)] - n * g[o]) < 4 * std::sqrt(n * g[o] * (1 - g[o])) + 1);

  std::vector<Expert> experts(2, pol.expert(0));
  std::vector<DenseNet> energies(2, pol.energy_net(0));
  MixturePolicy tied(experts, energies);
  ContextBatch b;
  b.contexts = Mat::Random(2, 10);
  tied.refresh_normalizers(b);
  CHECK(tied.act(c, rng, true).first == 0);

  ModelConfig mc;
  mc.num_experts = 1;
  auto single = MixturePolicy::create(mc, 2, 2, rng);
  single.refresh_normalizers(b);
  for (int i = 0; i < 20; ++i) CHECK(single.act(Vec::Random(2), rng, false).first == 0);
}
