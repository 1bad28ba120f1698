#ifndef DISKILL_ENVIRONMENTS_HPP
#define DISKILL_ENVIRONMENTS_HPP

#include <functional>
#include <memory>
#include <random>
#include <string>

#include "diskill/motion_primitives.hpp"
#include "diskill/nn.hpp"

namespace diskill {

/// Box-bounded context support with an additional validity predicate (holes, steps).
struct ContextSpace {
  int dim = 0;
  Vec lower;
  Vec upper;
  std::function<bool(const Vec&)> valid;

  bool contains(const Vec& c) const;
};

enum class ContextOrigin { Environment, Curriculum };

/// N contexts stored column-wise.
struct ContextBatch {
  Mat contexts;  // dim x N
  ContextOrigin origin = ContextOrigin::Environment;

  int size() const { return static_cast<int>(contexts.cols()); }
  int dim() const { return static_cast<int>(contexts.rows()); }
  Vec at(int i) const { return contexts.col(i); }
};

/// Rejection sampling inside the bounds. Throws ConfigError when fewer than
/// one in a thousand proposals is valid.
ContextBatch sample_contexts(const ContextSpace& space, int n, std::mt19937_64& rng);

struct EpisodeDiagnostics {
  Mat tip_trace;  // steps x 2
  Vec final_q;
  double final_distance = 0.0;
  double torque_cost = 0.0;      // sum over steps of sum_i a_i^2
  double velocity_penalty = 0.0; // sum_i qdot_i^2 at the final step
  bool collision = false;
  Vec mode_features;  // env-specific descriptor used for mode clustering
};

struct EpisodeResult {
  double episodic_return = 0.0;
  bool success = false;
  EpisodeDiagnostics diagnostics;
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual std::string name() const = 0;
  virtual const ContextSpace& context_space() const = 0;
  virtual const BasisConfig& basis() const = 0;
  /// Joint configuration every episode starts from.
  virtual Vec initial_q() const = 0;
  /// Pure and deterministic in (c, params).
  virtual EpisodeResult evaluate(const Vec& c, const MpParams& params) const = 0;
  /// Mode descriptors are sign patterns (true) or continuous features to cluster (false).
  virtual bool discrete_modes() const = 0;

  int param_dim() const { return basis().param_dim(); }
  int context_dim() const { return context_space().dim; }
};

struct ReacherConfig {
  int n_links = 5;
  double link_length = 0.2;
  double kp = 100.0;
  double kd = 20.0;
  double max_accel = 10.0;
  int horizon_steps = 200;
  double dt = 0.05;
  double torque_weight = 1.0;
  double goal_weight = 200.0;
  double velocity_weight = 10.0;
  double success_threshold = 0.05;
  int n_basis = 5;
  double bandwidth = 1.0;

  void validate() const;
};

/// Planar tip position with cumulative joint angles.
Vec forward_kinematics(const ReacherConfig& cfg, const Vec& q);

/// Planar n-link reacher with PD-tracked double-integrator joints and a sparse
/// terminal reward. Context: goal (x, y) inside the reachable disk.
class ReacherEnv final : public Environment {
 public:
  explicit ReacherEnv(ReacherConfig cfg);

  std::string name() const override { return "reacher"; }
  const ContextSpace& context_space() const override { return space_; }
  const BasisConfig& basis() const override { return basis_; }
  Vec initial_q() const override { return Vec::Zero(cfg_.n_links); }
  EpisodeResult evaluate(const Vec& c, const MpParams& params) const override;
  bool discrete_modes() const override { return true; }

  const ReacherConfig& config() const { return cfg_; }

 private:
  ReacherConfig cfg_;
  BasisConfig basis_;
  ContextSpace space_;
};

struct GateConfig {
  double wall_y = 0.5;
  double goal_y = 1.0;
  double gate_half_width = 0.1;
  double min_gate_gap = 0.5;
  double goal_x_range = 0.6;  // goal x in [-r, r]
  double gate_x_range = 0.8;  // gate x in [-r, r]
  double kp = 100.0;
  double kd = 20.0;
  double max_accel = 10.0;
  int horizon_steps = 100;
  double dt = 0.05;
  double torque_weight = 1.0;
  double goal_weight = 200.0;
  double collision_penalty = 5.0;
  double success_threshold = 0.05;
  int n_basis = 5;
  double bandwidth = 1.0;

  void validate() const;
};

/// Point mass starting at the origin that must cross a wall (y = wall_y)
/// through one of two gates and stop at a goal behind it.
/// Context: (goal x, gate-1 x, gate-2 x) with gate-2 at least min_gate_gap right of gate-1.
class GateEnv final : public Environment {
 public:
  explicit GateEnv(GateConfig cfg);

  std::string name() const override { return "gate"; }
  const ContextSpace& context_space() const override { return space_; }
  const BasisConfig& basis() const override { return basis_; }
  Vec initial_q() const override { return Vec::Zero(2); }
  EpisodeResult evaluate(const Vec& c, const MpParams& params) const override;
  bool discrete_modes() const override { return false; }

  const GateConfig& config() const { return cfg_; }

 private:
  GateConfig cfg_;
  BasisConfig basis_;
  ContextSpace space_;
};

struct EnvConfig {
  std::string kind = "reacher";
  ReacherConfig reacher;
  GateConfig gate;
};

std::unique_ptr<Environment> make_environment(const EnvConfig& cfg);

}  // namespace diskill

#endif  // DISKILL_ENVIRONMENTS_HPP
