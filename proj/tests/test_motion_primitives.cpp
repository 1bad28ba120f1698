#include <doctest.h>

#include <sstream>

#include "diskill/errors.hpp"
#include "diskill/motion_primitives.hpp"
#include "test_util.hpp"

using namespace diskill;

TEST_CASE("basis rows are a partition of unity") {
  for (int nb : {1, 2, 5, 9}) {
    BasisConfig cfg{nb, 57, 0.01, 1.0, 2};
    const Mat phi = basis_matrix(cfg);
    CHECK(phi.rows() == 57);
    CHECK(phi.cols() == nb);
    CHECK((phi.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(phi.minCoeff() >= 0.0);
  }
  BasisConfig one{1, 10, 0.01, 1.0, 1};
  CHECK(basis_matrix(one).isOnes(0.0));
}

TEST_CASE("basis is symmetric under time and index reversal") {
  BasisConfig cfg{5, 101, 0.01, 1.3, 1};
  const Mat phi = basis_matrix(cfg);
  const Mat reversed = phi.colwise().reverse().rowwise().reverse();
  CHECK((phi - reversed).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("zero or constant weights keep the arm at q0") {
  BasisConfig cfg{4, 30, 0.02, 1.0, 2};
  const Vec q0 = (Vec(2) << 0.3, -0.2).finished();
  for (double w : {0.0, 1.7}) {
    const auto traj = generate_trajectory({Vec::Constant(8, w)}, cfg, q0);
    for (int k = 0; k < traj.steps(); ++k) {
      CHECK((traj.q.row(k).transpose() - q0).norm() < 1e-12);
      CHECK(traj.dq.row(k).norm() < 1e-9);
    }
  }
}

TEST_CASE("trajectory starts at q0 and velocities are consistent") {
  std::mt19937_64 rng(2);
  BasisConfig cfg{5, 80, 0.05, 1.0, 3};
  const Vec q0 = testutil::random_vec(3, rng);
  const auto traj = generate_trajectory({testutil::random_vec(15, rng)}, cfg, q0);
  CHECK((traj.q.row(0).transpose() - q0).norm() < 1e-12);
  CHECK(traj.dq.row(0).isZero(0.0));
  const double vmax = traj.dq.cwiseAbs().maxCoeff();
  for (int k = 1; k < traj.steps(); ++k)
    CHECK((traj.q.row(k) - traj.q.row(k - 1)).cwiseAbs().maxCoeff() <= cfg.dt * vmax + 1e-12);
}

TEST_CASE("duration scaling resamples and keeps the endpoint") {
  BasisConfig cfg{5, 50, 0.01, 1.0, 1};
  const Vec w = Vec::LinSpaced(5, -1.0, 2.0);
  const auto base = generate_trajectory({w}, cfg, Vec::Zero(1));
  const auto slow = generate_trajectory({w, 2.0}, cfg, Vec::Zero(1));
  CHECK(slow.steps() == 100);
  CHECK(slow.q(99, 0) == doctest::Approx(base.q(49, 0)).epsilon(1e-12));

  // linear ramp oracle
  Mat ramp(5, 1);
  ramp << 0, 1, 2, 3, 4;
  const Mat r = resample_rows(ramp, 9);
  for (int k = 0; k < 9; ++k) CHECK(r(k, 0) == doctest::Approx(0.5 * k).epsilon(1e-12));
}

TEST_CASE("invalid primitives are rejected") {
  BasisConfig cfg{5, 50, 0.01, 1.0, 2};
  CHECK_THROWS_AS(generate_trajectory({Vec::Zero(9)}, cfg, Vec::Zero(2)), ShapeError);
  Vec w = Vec::Zero(10);
  w[3] = NAN;
  CHECK_THROWS_AS(generate_trajectory({w}, cfg, Vec::Zero(2)), NumericError);
  BasisConfig bad{5, 1, 0.01, 1.0, 2};
  CHECK_THROWS(basis_matrix(bad));
}

TEST_CASE("trajectory CSV has one row per step") {
  BasisConfig cfg{3, 12, 0.1, 1.0, 2};
  const auto traj = generate_trajectory({Vec::LinSpaced(6, 0, 1)}, cfg, Vec::Zero(2));
  std::ostringstream out;
  write_trajectory_csv(out, traj);
  const std::string s = out.str();
  CHECK(s.rfind("t,q_1,q_2,dq_1,dq_2\n", 0) == 0);
  CHECK(std::count(s.begin(), s.end(), '\n') == 13);
}
