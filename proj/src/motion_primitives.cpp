#include "diskill/motion_primitives.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "diskill/errors.hpp"
#include "diskill/serialization.hpp"

namespace diskill {

void BasisConfig::validate() const {
  if (n_basis < 1 || horizon_steps < 2 || !(dt > 0.0) || !(bandwidth > 0.0) || n_joints < 1)
    throw ConfigError("invalid motion primitive basis configuration");
}

Mat basis_matrix(const BasisConfig& cfg) {
  cfg.validate();
  const int steps = cfg.horizon_steps;
  const int n = cfg.n_basis;
  const double spacing = n > 1 ? 1.0 / (n - 1) : 1.0;
  const double width = cfg.bandwidth * spacing;
  Mat phi(steps, n);
  for (int k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) / (steps - 1);
    for (int j = 0; j < n; ++j) {
      const double c = n > 1 ? j * spacing : 0.5;
      const double u = (t - c) / width;
      phi(k, j) = std::exp(-0.5 * u * u);
    }
    phi.row(k) /= phi.row(k).sum();
  }
  return phi;
}

Mat resample_rows(const Mat& values, int new_steps) {
  require_shape(values.rows() >= 2 && new_steps >= 2, "resample_rows: need at least two rows");
  const auto old_steps = values.rows();
  Mat out(new_steps, values.cols());
  for (int k = 0; k < new_steps; ++k) {
    const double pos = static_cast<double>(k) * static_cast<double>(old_steps - 1) / (new_steps - 1);
    auto lo = static_cast<Eigen::Index>(std::floor(pos));
    if (lo >= old_steps - 1) lo = old_steps - 2;
    const double frac = pos - static_cast<double>(lo);
    out.row(k) = (1.0 - frac) * values.row(lo) + frac * values.row(lo + 1);
  }
  // Keep the endpoint bit-exact.
  out.row(new_steps - 1) = values.row(old_steps - 1);
  return out;
}

Trajectory generate_trajectory(const MpParams& params, const BasisConfig& cfg, const Vec& q0) {
  cfg.validate();
  require_shape(params.weights.size() == cfg.param_dim(),
                "motion primitive weights have length " + std::to_string(params.weights.size()) +
                    ", expected " + std::to_string(cfg.param_dim()));
  require_shape(q0.size() == cfg.n_joints, "initial joint vector has wrong length");
  if (!params.weights.allFinite() || !q0.allFinite())
    throw NumericError("motion primitive parameters must be finite");
  if (!(params.duration_scale > 0.0)) throw ConfigError("duration_scale must be positive");

  const Mat phi = basis_matrix(cfg);
  const Eigen::Map<const Mat> w(params.weights.data(), cfg.n_basis, cfg.n_joints);
  Mat q = phi * w;
  for (int j = 0; j < cfg.n_joints; ++j) q.col(j).array() += q0[j] - q(0, j);

  if (params.duration_scale != 1.0) {
    const int steps = static_cast<int>(std::lround(cfg.horizon_steps * params.duration_scale));
    q = resample_rows(q, std::max(steps, 2));
    q.row(0) = q0.transpose();
  }

  Trajectory traj;
  traj.dt = cfg.dt;
  traj.dq = Mat::Zero(q.rows(), q.cols());
  for (Eigen::Index k = 1; k < q.rows(); ++k) traj.dq.row(k) = (q.row(k) - q.row(k - 1)) / cfg.dt;
  traj.q = std::move(q);
  return traj;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  const auto n = traj.q.cols();
  out << "t";
  for (Eigen::Index j = 0; j < n; ++j) out << ",q_" << j + 1;
  for (Eigen::Index j = 0; j < n; ++j) out << ",dq_" << j + 1;
  out << '\n';
  for (Eigen::Index k = 0; k < traj.q.rows(); ++k) {
    out << format_double(static_cast<double>(k) * traj.dt);
    for (Eigen::Index j = 0; j < n; ++j) out << ',' << format_double(traj.q(k, j));
    for (Eigen::Index j = 0; j < n; ++j) out << ',' << format_double(traj.dq(k, j));
    out << '\n';
  }
}

}  // namespace diskill
