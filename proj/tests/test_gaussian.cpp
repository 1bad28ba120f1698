#include <doctest.h>

#include <cmath>

#include "diskill/errors.hpp"
#include "diskill/gaussian.hpp"
#include "test_util.hpp"

using namespace diskill;

namespace {

GaussianParams random_gaussian(int d, std::mt19937_64& rng) {
  GaussianParams g;
  g.mean = testutil::random_vec(d, rng);
  Mat l = Mat::Zero(d, d);
  std::normal_distribution<double> nd(0.0, 0.3);
  std::uniform_real_distribution<double> ud(0.5, 1.5);
  for (int i = 0; i < d; ++i) {
    l(i, i) = ud(rng);
    for (int j = 0; j < i; ++j) l(i, j) = nd(rng);
  }
  g.chol = l;
  return g;
}

}  // namespace

TEST_CASE("log-prob closed-form examples") {
  GaussianParams g1{Vec::Zero(1), Mat::Identity(1, 1)};
  CHECK(gaussian_log_prob(g1, Vec::Zero(1)) == doctest::Approx(-0.5 * std::log(2 * M_PI)).epsilon(1e-12));
  CHECK(gaussian_log_prob(g1, Vec::Zero(1)) == doctest::Approx(-0.9189).epsilon(1e-4));
  GaussianParams g2{Vec::Zero(2), Mat::Identity(2, 2)};
  CHECK(gaussian_log_prob(g2, Vec::Ones(2)) == doctest::Approx(-std::log(2 * M_PI) - 1).epsilon(1e-12));
  CHECK(gaussian_log_prob(g2, Vec::Ones(2)) == doctest::Approx(-2.8379).epsilon(1e-4));
}

TEST_CASE("log-prob matches the dense-covariance formula") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 1 + trial % 5;
    const auto g = random_gaussian(d, rng);
    const Vec x = testutil::random_vec(d, rng);
    const Mat cov = g.covariance();
    const Vec diff = x - g.mean;
    const double direct = -0.5 * (d * std::log(2 * M_PI) + std::log(cov.determinant()) +
                                  diff.dot(cov.inverse() * diff));
    CHECK(gaussian_log_prob(g, x) == doctest::Approx(direct).epsilon(1e-10));
  }
}

TEST_CASE("log-prob gradients match central differences") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 1 + trial % 4;
    const auto g = random_gaussian(d, rng);
    const Vec x = testutil::random_vec(d, rng);
    LogProbGrad lg;
    gaussian_log_prob(g, x, lg);
    const Vec nm = testutil::numeric_gradient([&](const Vec& m) { return gaussian_log_prob({m, g.chol}, x); }, g.mean);
    CHECK(testutil::rel_error(lg.d_mean, nm) < 1e-6);
    const Vec nx = testutil::numeric_gradient([&](const Vec& xx) { return gaussian_log_prob(g, xx); }, x);
    CHECK(testutil::rel_error(lg.d_x, nx) < 1e-6);
    // through the raw parameterization
    const Vec raw = raw_from_chol(g.chol);
    const Vec analytic = chol_grad_to_raw(lg.d_chol, raw, d);
    const Vec numeric = testutil::numeric_gradient(
        [&](const Vec& r) { return gaussian_log_prob({g.mean, chol_from_raw(r, d)}, x); }, raw);
    CHECK(testutil::rel_error(analytic, numeric) < 1e-5);
  }
}

TEST_CASE("entropy examples and monte-carlo agreement") {
  CHECK(gaussian_entropy({Vec::Zero(1), Mat::Identity(1, 1)}) == doctest::Approx(0.5 * (1 + std::log(2 * M_PI))));
  CHECK(gaussian_entropy({Vec::Zero(1), Mat::Identity(1, 1)}) == doctest::Approx(1.4189).epsilon(1e-4));
  std::mt19937_64 rng(4);
  const auto g = random_gaussian(4, rng);
  const int n = 100000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = -gaussian_log_prob(g, gaussian_sample(g, rng));
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  CHECK(std::abs(mean - gaussian_entropy(g)) < 3 * se);
}

TEST_CASE("KL closed-form examples") {
  const GaussianParams unit{Vec::Zero(1), Mat::Identity(1, 1)};
  const auto same = gaussian_kl(unit, unit);
  CHECK(same.mean_part == 0.0);
  CHECK(same.cov_part == doctest::Approx(0.0));
  CHECK(same.total == doctest::Approx(0.0));
  const auto shift = gaussian_kl({Vec::Ones(1), Mat::Identity(1, 1)}, unit);
  CHECK(shift.mean_part == doctest::Approx(0.5));
  CHECK(shift.cov_part == doctest::Approx(0.0));
  CHECK(shift.total == doctest::Approx(0.5));
  const auto wide = gaussian_kl({Vec::Zero(1), 2.0 * Mat::Identity(1, 1)}, unit);
  CHECK(wide.cov_part == doctest::Approx(0.5 * (4 - 1 - std::log(4.0))).epsilon(1e-12));
  CHECK(wide.cov_part == doctest::Approx(0.8069).epsilon(1e-4));
}

TEST_CASE("KL matches monte-carlo estimate") {
  std::mt19937_64 rng(5);
  const auto p = random_gaussian(3, rng);
  auto q = random_gaussian(3, rng);
  q.mean = p.mean + 0.3 * testutil::random_vec(3, rng);
  const int n = 100000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vec x = gaussian_sample(p, rng);
    const double v = gaussian_log_prob(p, x) - gaussian_log_prob(q, x);
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  const auto kl = gaussian_kl(p, q);
  CHECK(std::abs(mean - kl.total) < 3 * se);
  CHECK(kl.total == doctest::Approx(kl.mean_part + kl.cov_part));
}

TEST_CASE("samples have the right mean and covariance") {
  std::mt19937_64 rng(6);
  const auto g = random_gaussian(3, rng);
  const int n = 100000;
  Vec mean = Vec::Zero(3);
  Mat cov = Mat::Zero(3, 3);
  for (int i = 0; i < n; ++i) {
    const Vec x = gaussian_sample(g, rng);
    mean += x;
    cov += (x - g.mean) * (x - g.mean).transpose();
  }
  mean /= n;
  cov /= n;
  const Mat truth = g.covariance();
  for (int i = 0; i < 3; ++i) CHECK(std::abs(mean[i] - g.mean[i]) < 4 * std::sqrt(truth(i, i) / n));
  CHECK((cov - truth).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("cholesky parameterization round trips and stays positive definite") {
  std::mt19937_64 rng(7);
  for (int d = 1; d <= 5; ++d) {
    CHECK(chol_param_count(d) == d * (d + 1) / 2);
    const Vec raw = testutil::random_vec(chol_param_count(d), rng, 3.0);
    const Mat l = chol_from_raw(raw, d);
    CHECK(l.diagonal().minCoeff() > 0.0);
    CHECK(l.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().isZero(0.0));
    const Mat cov = l * l.transpose();
    CHECK((cov - cov.transpose()).norm() == 0.0);
    CHECK(Eigen::LLT<Mat>(cov).info() == Eigen::Success);
    CHECK(testutil::rel_error(raw_from_chol(l), raw) < 1e-9);
  }
  CHECK(softplus(softplus_inverse(0.3)) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(softplus(800.0) == doctest::Approx(800.0));
}

TEST_CASE("non-finite inputs are rejected") {
  GaussianParams g{Vec::Zero(2), Mat::Identity(2, 2)};
  Vec bad = Vec::Zero(2);
  bad[0] = std::nan("");
  CHECK_THROWS_AS(gaussian_log_prob(g, bad), NumericError);
  g.mean[1] = INFINITY;
  CHECK_THROWS_AS(gaussian_entropy(GaussianParams{Vec::Zero(1), Mat::Constant(1, 1, NAN)}), NumericError);
}
