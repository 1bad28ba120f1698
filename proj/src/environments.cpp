#include "diskill/environments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "diskill/errors.hpp"

namespace diskill {

bool ContextSpace::contains(const Vec& c) const {
  if (c.size() != dim || !c.allFinite()) return false;
  for (int i = 0; i < dim; ++i) {
    if (c[i] < lower[i] || c[i] > upper[i]) return false;
  }
  return !valid || valid(c);
}

ContextBatch sample_contexts(const ContextSpace& space, int n, std::mt19937_64& rng) {
  if (n < 1) throw ConfigError("sample_contexts: n must be >= 1");
  ContextBatch batch;
  batch.contexts.resize(space.dim, n);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  long attempts = 0;
  int accepted = 0;
  Vec c(space.dim);
  while (accepted < n) {
    for (int i = 0; i < space.dim; ++i)
      c[i] = space.lower[i] + (space.upper[i] - space.lower[i]) * unit(rng);
    ++attempts;
    if (!space.valid || space.valid(c)) batch.contexts.col(accepted++) = c;
    if (attempts >= 1000 && static_cast<double>(accepted) / static_cast<double>(attempts) < 1e-3)
      throw ConfigError("sample_contexts: acceptance rate below 1e-3, context space is degenerate");
  }
  return batch;
}

namespace {

struct PdState {
  Vec q;
  Vec qd;
};

// One PD tracking step on unit-inertia double integrators (semi-implicit Euler).
// Returns the applied (clipped) accelerations.
Vec pd_step(PdState& s, const Trajectory& traj, Eigen::Index k, double kp, double kd, double max_accel,
            double dt) {
  Vec a = kp * (traj.q.row(k).transpose() - s.q) + kd * (traj.dq.row(k).transpose() - s.qd);
  a = a.cwiseMax(-max_accel).cwiseMin(max_accel);
  s.qd += dt * a;
  s.q += dt * s.qd;
  return a;
}

void check_params(const MpParams& params, int dim) {
  require_shape(params.weights.size() == dim, "episode parameters have the wrong dimension");
  if (!params.weights.allFinite() || !std::isfinite(params.duration_scale))
    throw NumericError("episode parameters must be finite");
}

}  // namespace

void ReacherConfig::validate() const {
  if (n_links < 1 || !(link_length > 0) || !(kp > 0) || !(kd >= 0) || !(max_accel > 0) ||
      horizon_steps < 2 || !(dt > 0) || n_basis < 1 || !(bandwidth > 0) || !(success_threshold > 0))
    throw ConfigError("invalid reacher configuration");
}

Vec forward_kinematics(const ReacherConfig& cfg, const Vec& q) {
  require_shape(q.size() == cfg.n_links, "forward_kinematics: joint vector length != n_links");
  Vec tip = Vec::Zero(2);
  double angle = 0.0;
  for (int i = 0; i < cfg.n_links; ++i) {
    angle += q[i];
    tip[0] += cfg.link_length * std::cos(angle);
    tip[1] += cfg.link_length * std::sin(angle);
  }
  return tip;
}

ReacherEnv::ReacherEnv(ReacherConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  basis_ = BasisConfig{cfg_.n_basis, cfg_.horizon_steps, cfg_.dt, cfg_.bandwidth, cfg_.n_links};
  const double reach = cfg_.n_links * cfg_.link_length;
  space_.dim = 2;
  space_.lower = Vec::Constant(2, -reach);
  space_.upper = Vec::Constant(2, reach);
  space_.valid = [reach](const Vec& c) { return c.norm() <= reach; };
}

EpisodeResult ReacherEnv::evaluate(const Vec& c, const MpParams& params) const {
  require_shape(c.size() == 2, "reacher context must be a 2D goal");
  check_params(params, basis_.param_dim());
  const Trajectory traj = generate_trajectory(params, basis_, initial_q());
  PdState s{initial_q(), Vec::Zero(cfg_.n_links)};
  EpisodeResult res;
  auto& diag = res.diagnostics;
  diag.tip_trace.resize(traj.steps(), 2);
  for (Eigen::Index k = 0; k < traj.steps(); ++k) {
    const Vec a = pd_step(s, traj, k, cfg_.kp, cfg_.kd, cfg_.max_accel, cfg_.dt);
    diag.torque_cost += a.squaredNorm();
    diag.tip_trace.row(k) = forward_kinematics(cfg_, s.q).transpose();
  }
  diag.final_q = s.q;
  diag.final_distance = (forward_kinematics(cfg_, s.q) - c).norm();
  diag.velocity_penalty = s.qd.squaredNorm();
  res.episodic_return = -cfg_.torque_weight * diag.torque_cost - cfg_.goal_weight * diag.final_distance -
                        cfg_.velocity_weight * diag.velocity_penalty;
  res.success = diag.final_distance < cfg_.success_threshold;
  diag.mode_features = s.q.unaryExpr([](double v) { return v >= 0.0 ? 1.0 : -1.0; });
  return res;
}

void GateConfig::validate() const {
  if (!(gate_half_width > 0) || !(min_gate_gap > 2 * gate_half_width) || !(goal_y > wall_y) ||
      !(wall_y > 0) || !(kp > 0) || !(kd >= 0) || !(max_accel > 0) || horizon_steps < 2 || !(dt > 0) ||
      n_basis < 1 || !(bandwidth > 0) || !(goal_x_range > 0) || !(gate_x_range > 0) ||
      2 * gate_x_range < min_gate_gap)
    throw ConfigError("invalid gate environment configuration");
}

GateEnv::GateEnv(GateConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  basis_ = BasisConfig{cfg_.n_basis, cfg_.horizon_steps, cfg_.dt, cfg_.bandwidth, 2};
  space_.dim = 3;
  space_.lower = Vec(3);
  space_.upper = Vec(3);
  space_.lower << -cfg_.goal_x_range, -cfg_.gate_x_range, -cfg_.gate_x_range;
  space_.upper << cfg_.goal_x_range, cfg_.gate_x_range, cfg_.gate_x_range;
  const double gap = cfg_.min_gate_gap;
  space_.valid = [gap](const Vec& c) { return c[2] - c[1] >= gap; };
}

EpisodeResult GateEnv::evaluate(const Vec& c, const MpParams& params) const {
  require_shape(c.size() == 3, "gate context must be (goal x, gate-1 x, gate-2 x)");
  check_params(params, basis_.param_dim());
  const Trajectory traj = generate_trajectory(params, basis_, initial_q());
  const Vec goal = (Vec(2) << c[0], cfg_.goal_y).finished();
  PdState s{initial_q(), Vec::Zero(2)};
  EpisodeResult res;
  auto& diag = res.diagnostics;
  diag.tip_trace.resize(traj.steps(), 2);
  double crossing_x = std::numeric_limits<double>::quiet_NaN();
  Eigen::Index k = 0;
  for (; k < traj.steps(); ++k) {
    const Vec prev = s.q;
    const Vec a = pd_step(s, traj, k, cfg_.kp, cfg_.kd, cfg_.max_accel, cfg_.dt);
    diag.torque_cost += a.squaredNorm();
    diag.tip_trace.row(k) = s.q.transpose();
    const double y0 = prev[1] - cfg_.wall_y;
    const double y1 = s.q[1] - cfg_.wall_y;
    if ((y0 < 0.0) != (y1 < 0.0)) {
      const double t = y0 / (y0 - y1);
      const double x = prev[0] + t * (s.q[0] - prev[0]);
      crossing_x = x;
      const bool in_gate = std::abs(x - c[1]) <= cfg_.gate_half_width ||
                           std::abs(x - c[2]) <= cfg_.gate_half_width;
      if (!in_gate) {
        diag.collision = true;
        s.q = prev + t * (s.q - prev);
        diag.tip_trace.row(k) = s.q.transpose();
        ++k;
        break;
      }
    }
  }
  diag.tip_trace.conservativeResize(k, 2);
  diag.final_q = s.q;
  diag.final_distance = (s.q - goal).norm();
  res.episodic_return = -cfg_.torque_weight * diag.torque_cost - cfg_.goal_weight * diag.final_distance -
                        (diag.collision ? cfg_.collision_penalty : 0.0);
  res.success = !diag.collision && diag.final_distance < cfg_.success_threshold;
  diag.mode_features = Vec::Constant(1, std::isnan(crossing_x) ? s.q[0] : crossing_x);
  return res;
}

std::unique_ptr<Environment> make_environment(const EnvConfig& cfg) {
  if (cfg.kind == "reacher") return std::make_unique<ReacherEnv>(cfg.reacher);
  if (cfg.kind == "gate") return std::make_unique<GateEnv>(cfg.gate);
  throw ConfigError("unknown environment kind '" + cfg.kind + "'");
}

}  // namespace diskill
