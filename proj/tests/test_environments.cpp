#include <doctest.h>

#include <cmath>

#include "diskill/config.hpp"
#include "diskill/environments.hpp"
#include "diskill/errors.hpp"
#include "test_util.hpp"

using namespace diskill;

namespace {

ReacherConfig two_link() {
  ReacherConfig cfg;
  cfg.n_links = 2;
  cfg.link_length = 0.5;
  return cfg;
}

/// Weights whose desired path is the straight segment from the origin to `end`.
Vec straight_to(const Vec& end, const BasisConfig& basis) {
  const Mat phi = basis_matrix(basis);
  Vec u = Vec::Zero(basis.n_basis);
  u.tail(2).setOnes();  // late step, flat at the end
  const double gain = phi.row(phi.rows() - 1).dot(u) - phi.row(0).dot(u);
  Vec w(basis.param_dim());
  for (int j = 0; j < basis.n_joints; ++j) w.segment(j * basis.n_basis, basis.n_basis) = u * (end[j] / gain);
  return w;
}

}  // namespace

TEST_CASE("forward kinematics examples") {
  const auto cfg = two_link();
  const auto fk = [&](double a, double b) { return forward_kinematics(cfg, (Vec(2) << a, b).finished()); };
  CHECK((fk(0, 0) - (Vec(2) << 1.0, 0.0).finished()).norm() < 1e-12);
  CHECK((fk(M_PI / 2, 0) - (Vec(2) << 0.0, 1.0).finished()).norm() < 1e-12);
  CHECK((fk(M_PI / 2, -M_PI / 2) - (Vec(2) << 0.5, 0.5).finished()).norm() < 1e-12);
}

TEST_CASE("reacher reward for a motionless arm") {
  ReacherEnv env(two_link());
  const Vec zero = Vec::Zero(env.param_dim());
  const auto at_tip = env.evaluate((Vec(2) << 1.0, 0.0).finished(), {zero});
  CHECK(at_tip.episodic_return == 0.0);
  CHECK(at_tip.success);
  const auto off = env.evaluate((Vec(2) << 0.7, 0.0).finished(), {zero});
  CHECK(off.episodic_return == doctest::Approx(-60.0).epsilon(1e-12));
  CHECK(off.diagnostics.torque_cost == 0.0);
  CHECK_FALSE(off.success);
}

TEST_CASE("reacher returns are costs and decompose into their terms") {
  ReacherEnv env(two_link());
  std::mt19937_64 rng(3);
  const auto batch = sample_contexts(env.context_space(), 50, rng);
  for (int i = 0; i < batch.size(); ++i) {
    const Vec theta = testutil::random_vec(env.param_dim(), rng, 1.5);
    const auto r = env.evaluate(batch.at(i), {theta});
    CHECK(r.episodic_return <= 0.0);
    const auto& d = r.diagnostics;
    CHECK(r.episodic_return ==
          doctest::Approx(-d.torque_cost - 200.0 * d.final_distance - 10.0 * d.velocity_penalty).epsilon(1e-12));
    CHECK(r.success == (d.final_distance < 0.05));
    const auto again = env.evaluate(batch.at(i), {theta});
    CHECK(again.episodic_return == r.episodic_return);
    CHECK(again.diagnostics.tip_trace == d.tip_trace);
  }
}

TEST_CASE("reacher reaches a goal through a tracked trajectory") {
  ReacherEnv env(two_link());
  // elbow-down and elbow-up solutions for a goal on the x axis
  const double x = 0.6, l = 0.5;
  const double q2 = std::acos((x * x - 2 * l * l) / (2 * l * l));
  const double q1 = -std::atan2(l * std::sin(q2), l + l * std::cos(q2));
  for (double s : {1.0, -1.0}) {
    const Vec q = (Vec(2) << s * q1, s * q2).finished();
    const auto r = env.evaluate((Vec(2) << x, 0.0).finished(), {straight_to(q, env.basis())});
    CHECK(r.success);
    CHECK(r.diagnostics.mode_features[1] == s);
  }
}

TEST_CASE("context sampling respects support and is deterministic") {
  ReacherEnv env(two_link());
  std::mt19937_64 a(9), b(9);
  const auto b1 = sample_contexts(env.context_space(), 100000, a);
  CHECK(b1.contexts.colwise().norm().maxCoeff() <= 1.0);
  const auto b2 = sample_contexts(env.context_space(), 100000, b);
  CHECK(b1.contexts == b2.contexts);

  GateEnv gate{GateConfig{}};
  std::mt19937_64 c(4);
  const auto gb = sample_contexts(gate.context_space(), 100000, c);
  for (int i = 0; i < gb.size(); ++i) CHECK_FALSE(gb.contexts(2, i) - gb.contexts(1, i) < 0.5);

  ContextSpace sparse;
  sparse.dim = 1;
  sparse.lower = Vec::Zero(1);
  sparse.upper = Vec::Ones(1);
  sparse.valid = [](const Vec& v) { return v[0] < 1e-6; };
  CHECK_THROWS_AS(sample_contexts(sparse, 10, c), ConfigError);
}

TEST_CASE("gate: straight path through a gate succeeds, into the wall collides") {
  GateEnv env{GateConfig{}};
  const Vec ctx = (Vec(3) << 0.3, 0.15, 0.7).finished();
  const Vec goal = (Vec(2) << 0.3, 1.0).finished();
  const auto ok = env.evaluate(ctx, {straight_to(goal, env.basis())});
  CHECK_FALSE(ok.diagnostics.collision);
  CHECK(ok.success);
  CHECK(ok.diagnostics.mode_features[0] == doctest::Approx(0.15).epsilon(1e-3));

  const Vec wall = (Vec(2) << 0.8, 1.0).finished();  // crosses y = 0.5 at x = 0.4
  const auto hit = env.evaluate(ctx, {straight_to(wall, env.basis())});
  CHECK(hit.diagnostics.collision);
  CHECK_FALSE(hit.success);
  CHECK(hit.diagnostics.tip_trace.rows() < env.basis().horizon_steps);
  CHECK(hit.episodic_return ==
        doctest::Approx(-hit.diagnostics.torque_cost - 200.0 * hit.diagnostics.final_distance - 5.0).epsilon(1e-12));
}

TEST_CASE("gate: mirror-image parameters give equal returns in a symmetric context") {
  GateEnv env{GateConfig{}};
  std::mt19937_64 rng(5);
  const int nb = env.basis().n_basis;
  for (double g : {0.3, 0.45, 0.6}) {
    const Vec ctx = (Vec(3) << 0.0, -g, g).finished();
    for (int trial = 0; trial < 10; ++trial) {
      const Vec theta = testutil::random_vec(env.param_dim(), rng);
      Vec mirror = theta;
      mirror.head(nb) *= -1.0;
      const auto a = env.evaluate(ctx, {theta});
      const auto b = env.evaluate(ctx, {mirror});
      CHECK(std::abs(a.episodic_return - b.episodic_return) < 1e-9);
      CHECK(a.diagnostics.collision == b.diagnostics.collision);
    }
  }
}

TEST_CASE("environments reject malformed input") {
  ReacherEnv env(two_link());
  CHECK_THROWS_AS(env.evaluate(Vec::Zero(3), {Vec::Zero(env.param_dim())}), ShapeError);
  CHECK_THROWS_AS(env.evaluate(Vec::Zero(2), {Vec::Zero(3)}), ShapeError);
  Vec bad = Vec::Zero(env.param_dim());
  bad[0] = INFINITY;
  CHECK_THROWS_AS(env.evaluate(Vec::Zero(2), {bad}), NumericError);
  CHECK(make_environment(desk_gate_config().env)->name() == "gate");
  EnvConfig unknown;
  unknown.kind = "pendulum";
  CHECK_THROWS_AS(make_environment(unknown), ConfigError);
}
