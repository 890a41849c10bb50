#include "lcmpc/behavior.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lcmpc {

namespace {
double raw_acceleration(double v_target, Maneuver m, const TargetParams& p) {
  switch (m) {
    case Maneuver::kBrake:
      return -p.k_brake * v_target;
    case Maneuver::kTrack:
      return p.k_track * (p.v_max - v_target);
  }
  throw std::invalid_argument("unknown maneuver");
}
}  // namespace

double base_acceleration(const JointState& joint, Maneuver m, const TargetParams& p) {
  const double a = raw_acceleration(joint.target.v, m, p);
  return std::clamp(a, p.a_min, p.a_max_comf);
}

double base_acceleration_slope(const JointState& joint, Maneuver m, const TargetParams& p) {
  const double a = raw_acceleration(joint.target.v, m, p);
  if (a <= p.a_min || a >= p.a_max_comf) {
    return 0.0;
  }
  return m == Maneuver::kBrake ? -p.k_brake : -p.k_track;
}

VehicleState target_step(const JointState& joint, Maneuver m, const TargetParams& p,
                         const VehicleGeometry& geom, double dt) {
  const ControlInput u{base_acceleration(joint, m, p), 0.0};
  return step(joint.target, u, geom, dt);
}

Maneuver pidm_decide(const JointState& joint, const TargetParams& p, double dt) {
  if (dt <= 0.0) {
    throw std::invalid_argument("pidm_decide: dt must be positive");
  }
  if (joint.ego.px <= joint.target.px) {
    return Maneuver::kTrack;
  }
  const int steps = static_cast<int>(std::lround(p.np / dt));
  const double vy_ego = joint.ego.v * std::sin(joint.ego.psi);
  const double vy_target = joint.target.v * std::sin(joint.target.psi);
  for (int k = 0; k <= steps; ++k) {
    const double gap = (joint.ego.py + k * dt * vy_ego) -
                       (joint.target.py + k * dt * vy_target);
    if (std::abs(gap) <= p.c_thres) {
      return Maneuver::kBrake;
    }
  }
  return Maneuver::kTrack;
}

}  // namespace lcmpc
