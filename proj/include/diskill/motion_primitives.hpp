#ifndef DISKILL_MOTION_PRIMITIVES_HPP
#define DISKILL_MOTION_PRIMITIVES_HPP

#include <ostream>

#include "diskill/nn.hpp"

namespace diskill {

struct BasisConfig {
  int n_basis = 5;  // per joint
  int horizon_steps = 200;
  double dt = 0.01;
  double bandwidth = 1.0;  // RBF width as a multiple of the center spacing
  int n_joints = 2;

  int param_dim() const { return n_basis * n_joints; }
  void validate() const;
};

struct MpParams {
  Vec weights;  // joint-major: weights[j * n_basis + b]
  double duration_scale = 1.0;
};

struct Trajectory {
  Mat q;   // steps x n_joints
  Mat dq;  // steps x n_joints
  double dt = 0.0;

  int steps() const { return static_cast<int>(q.rows()); }
};

/// Normalized Gaussian RBFs on an equally spaced phase grid, T x n_basis, rows sum to 1.
Mat basis_matrix(const BasisConfig& cfg);

/// Desired positions Phi * w per joint, shifted so q[0] == q0; velocities by
/// backward differences with dq[0] = 0.
Trajectory generate_trajectory(const MpParams& params, const BasisConfig& cfg, const Vec& q0);

/// Linear interpolation of each column onto `new_steps` equally spaced phase points.
Mat resample_rows(const Mat& values, int new_steps);

/// CSV with header t,q_1..q_n,dq_1..dq_n.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);

}  // namespace diskill

#endif  // DISKILL_MOTION_PRIMITIVES_HPP
