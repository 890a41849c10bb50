#pragma once

#include "lcmpc/dynamics.hpp"

namespace lcmpc {

/// Discrete maneuvers of the target driver.
enum class Maneuver : int { kBrake = 0, kTrack = 1 };

inline constexpr int kNumManeuvers = 2;

/// Parameters describing one target driver (gains, comfort limits and the
/// P-IDM decision rule parameters).
struct TargetParams {
  double k_brake{0.7};      // brake gain [1/s]
  double k_track{0.7};      // tracking gain [1/s]
  double a_max_comf{3.0};   // maximum comfort acceleration [m/s^2]
  double a_min{-5.0};       // minimum acceleration [m/s^2]
  double v_max{28.0};       // tracked velocity [m/s]
  double np{0.5};           // P-IDM prediction horizon [s]
  double c_thres{2.0};      // lateral decision threshold [m]
};

/// Longitudinal acceleration of the target policy for maneuver m, clipped to
/// [a_min, a_max_comf]. The steering component of the policy is zero.
double base_acceleration(const JointState& joint, Maneuver m, const TargetParams& p);

/// Derivative of base_acceleration with respect to the target speed
/// (zero inside the clipped regions). Used for planner sensitivities.
double base_acceleration_slope(const JointState& joint, Maneuver m, const TargetParams& p);

/// Advances the target state one step with input (base_acceleration, 0).
VehicleState target_step(const JointState& joint, Maneuver m, const TargetParams& p,
                         const VehicleGeometry& geom, double dt);

/// Ground-truth P-IDM decision: both vehicles are extrapolated with constant
/// velocity along their current headings for k = 0..round(np/dt) steps.
/// Returns kBrake iff the ego is currently ahead longitudinally and the
/// predicted lateral gap falls within c_thres at some step.
Maneuver pidm_decide(const JointState& joint, const TargetParams& p, double dt);

}  // namespace lcmpc
