#ifndef DISKILL_GAUSSIAN_HPP
#define DISKILL_GAUSSIAN_HPP

#include <random>

#include "diskill/nn.hpp"

namespace diskill {

/// Multivariate normal N(mean, chol * chol^T); `chol` is lower triangular with positive diagonal.
struct GaussianParams {
  Vec mean;
  Mat chol;

  int dim() const { return static_cast<int>(mean.size()); }
  Mat covariance() const { return chol * chol.transpose(); }
};

struct KlParts {
  double mean_part = 0.0;
  double cov_part = 0.0;
  double total = 0.0;
};

/// Partial derivatives of the log-density.
struct LogProbGrad {
  Vec d_mean;
  Mat d_chol;  // lower triangular
  Vec d_x;
};

double gaussian_log_prob(const GaussianParams& g, const Vec& x);
double gaussian_log_prob(const GaussianParams& g, const Vec& x, LogProbGrad& grad);

/// H = d/2 (1 + ln 2pi) + sum ln L_ii
double gaussian_entropy(const GaussianParams& g);

/// KL(new || old), split into the mean and covariance contributions.
KlParts gaussian_kl(const GaussianParams& new_g, const GaussianParams& old_g);

Vec gaussian_sample(const GaussianParams& g, std::mt19937_64& rng);

// Unconstrained parameterization of a Cholesky factor. The raw vector holds
// the lower triangle row by row; diagonal entries go through softplus.
int chol_param_count(int d);
Mat chol_from_raw(const Vec& raw, int d);
Vec raw_from_chol(const Mat& chol);
/// Chain rule from d/dL (lower triangular) to d/draw.
Vec chol_grad_to_raw(const Mat& d_chol, const Vec& raw, int d);

double softplus(double x);
double softplus_inverse(double y);

}  // namespace diskill

#endif  // DISKILL_GAUSSIAN_HPP
