#include "diskill/gaussian.hpp"

#include <cmath>
#include <numbers>

#include "diskill/errors.hpp"

namespace diskill {
namespace {

constexpr double kLog2Pi = 1.8378770664093453;

void check_finite(const GaussianParams& g, const Vec& x) {
  if (!g.mean.allFinite() || !g.chol.allFinite() || !x.allFinite())
    throw NumericError("gaussian: non-finite input");
}

void check_dims(const GaussianParams& g, const Vec& x) {
  require_shape(g.chol.rows() == g.dim() && g.chol.cols() == g.dim(),
                "gaussian: Cholesky factor shape does not match mean");
  require_shape(x.size() == g.dim(), "gaussian: sample dimension does not match");
}

}  // namespace

double gaussian_log_prob(const GaussianParams& g, const Vec& x) {
  check_dims(g, x);
  check_finite(g, x);
  const Vec z = g.chol.triangularView<Eigen::Lower>().solve(x - g.mean);
  return -0.5 * g.dim() * kLog2Pi - g.chol.diagonal().array().log().sum() - 0.5 * z.squaredNorm();
}

double gaussian_log_prob(const GaussianParams& g, const Vec& x, LogProbGrad& grad) {
  check_dims(g, x);
  check_finite(g, x);
  const auto lower = g.chol.triangularView<Eigen::Lower>();
  const Vec z = lower.solve(x - g.mean);
  // w = Sigma^{-1} (x - mean)
  const Vec w = lower.transpose().solve(z);
  grad.d_mean = w;
  grad.d_x = -w;
  grad.d_chol = (w * z.transpose()).triangularView<Eigen::Lower>();
  grad.d_chol.diagonal() -= g.chol.diagonal().cwiseInverse();
  return -0.5 * g.dim() * kLog2Pi - g.chol.diagonal().array().log().sum() - 0.5 * z.squaredNorm();
}

double gaussian_entropy(const GaussianParams& g) {
  if (!g.chol.allFinite()) throw NumericError("gaussian_entropy: non-finite Cholesky factor");
  return 0.5 * g.dim() * (1.0 + kLog2Pi) + g.chol.diagonal().array().log().sum();
}

KlParts gaussian_kl(const GaussianParams& new_g, const GaussianParams& old_g) {
  require_shape(new_g.dim() == old_g.dim(), "gaussian_kl: dimension mismatch");
  const int d = new_g.dim();
  const auto old_lower = old_g.chol.triangularView<Eigen::Lower>();
  KlParts kl;
  const Vec z = old_lower.solve(new_g.mean - old_g.mean);
  kl.mean_part = 0.5 * z.squaredNorm();
  const Mat m = old_lower.solve(new_g.chol);
  const double trace = m.squaredNorm();
  const double logdet_old = 2.0 * old_g.chol.diagonal().array().log().sum();
  const double logdet_new = 2.0 * new_g.chol.diagonal().array().log().sum();
  kl.cov_part = 0.5 * (trace - d + logdet_old - logdet_new);
  // Rounding can push an exact zero slightly negative.
  if (kl.cov_part < 0.0 && kl.cov_part > -1e-12) kl.cov_part = 0.0;
  kl.total = kl.mean_part + kl.cov_part;
  return kl;
}

Vec gaussian_sample(const GaussianParams& g, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec eps(g.dim());
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps[i] = normal(rng);
  return g.mean + g.chol.triangularView<Eigen::Lower>() * eps;
}

double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw NumericError("softplus_inverse: argument must be positive");
  return y > 30.0 ? y : std::log(std::expm1(y));
}

int chol_param_count(int d) { return d * (d + 1) / 2; }

Mat chol_from_raw(const Vec& raw, int d) {
  require_shape(raw.size() == chol_param_count(d), "chol_from_raw: wrong raw length");
  Mat l = Mat::Zero(d, d);
  Eigen::Index k = 0;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j <= i; ++j, ++k) l(i, j) = i == j ? softplus(raw[k]) : raw[k];
  }
  return l;
}

Vec raw_from_chol(const Mat& chol) {
  const int d = static_cast<int>(chol.rows());
  Vec raw(chol_param_count(d));
  Eigen::Index k = 0;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j <= i; ++j, ++k) raw[k] = i == j ? softplus_inverse(chol(i, j)) : chol(i, j);
  }
  return raw;
}

Vec chol_grad_to_raw(const Mat& d_chol, const Vec& raw, int d) {
  Vec out(chol_param_count(d));
  Eigen::Index k = 0;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j <= i; ++j, ++k) {
      // softplus' = sigmoid
      out[k] = i == j ? d_chol(i, j) / (1.0 + std::exp(-raw[k])) : d_chol(i, j);
    }
  }
  return out;
}

}  // namespace diskill
