#pragma once

#include <Eigen/Dense>

namespace lcmpc {

/// State of a single vehicle: position of the center of gravity in the
/// inertial frame, speed, and heading.
struct VehicleState {
  double px{0.0};   // longitudinal position [m]
  double py{0.0};   // lateral position [m]
  double v{0.0};    // speed of the center of gravity [m/s]
  double psi{0.0};  // heading [rad]

  Eigen::Vector4d vec() const { return {px, py, v, psi}; }
  static VehicleState from_vec(const Eigen::Vector4d& z) {
    return {z[0], z[1], z[2], z[3]};
  }
};

struct ControlInput {
  double accel{0.0};  // longitudinal acceleration [m/s^2]
  double steer{0.0};  // front steering angle [rad]

  Eigen::Vector2d vec() const { return {accel, steer}; }
  static ControlInput from_vec(const Eigen::Vector2d& u) { return {u[0], u[1]}; }
};

/// Axle distances define the kinematics, the box defines the footprint used
/// for collision checking. length >= lf + lr is not required.
struct VehicleGeometry {
  double lf{1.25};    // CoG to front axle [m]
  double lr{1.25};    // CoG to rear axle [m]
  double length{5.0}; // collision box length [m]
  double width{2.0};  // collision box width [m]
};

/// Concatenated ego + target state (dimension 8).
struct JointState {
  VehicleState ego;
  VehicleState target;

  Eigen::Matrix<double, 8, 1> vec() const {
    Eigen::Matrix<double, 8, 1> z;
    z << ego.vec(), target.vec();
    return z;
  }
  static JointState from_vec(const Eigen::Matrix<double, 8, 1>& z) {
    return {VehicleState::from_vec(z.head<4>()), VehicleState::from_vec(z.tail<4>())};
  }
};

/// Slip angle at the center of gravity, beta = atan(lr/(lf+lr) * tan(steer)).
/// Throws std::invalid_argument for |steer| >= pi/2.
double slip_angle(double steer, const VehicleGeometry& geom);

/// Continuous-time kinematic bicycle rates (pxdot, pydot, vdot, psidot).
VehicleState derivative(const VehicleState& state, const ControlInput& input,
                        const VehicleGeometry& geom);

/// One forward-Euler step of the kinematic bicycle over dt.
VehicleState step(const VehicleState& state, const ControlInput& input,
                  const VehicleGeometry& geom, double dt);

struct StepJacobian {
  Eigen::Matrix4d wrt_state;
  Eigen::Matrix<double, 4, 2> wrt_input;
};

/// Analytic Jacobians of step() with respect to state and input.
StepJacobian step_jacobian(const VehicleState& state, const ControlInput& input,
                           const VehicleGeometry& geom, double dt);

}  // namespace lcmpc
