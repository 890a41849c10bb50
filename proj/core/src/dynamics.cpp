#include "lcmpc/dynamics.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace lcmpc {

double slip_angle(double steer, const VehicleGeometry& geom) {
  if (std::abs(steer) >= std::numbers::pi / 2.0) {
    throw std::invalid_argument("slip_angle: |steer| >= pi/2");
  }
  const double ratio = geom.lr / (geom.lf + geom.lr);
  return std::atan(ratio * std::tan(steer));
}

VehicleState derivative(const VehicleState& state, const ControlInput& input,
                        const VehicleGeometry& geom) {
  const double beta = slip_angle(input.steer, geom);
  VehicleState rate;
  rate.px = state.v * std::cos(state.psi + beta);
  rate.py = state.v * std::sin(state.psi + beta);
  rate.v = input.accel;
  rate.psi = state.v / geom.lr * std::sin(beta);
  return rate;
}

VehicleState step(const VehicleState& state, const ControlInput& input,
                  const VehicleGeometry& geom, double dt) {
  if (dt <= 0.0) {
    throw std::invalid_argument("step: dt must be positive");
  }
  const VehicleState rate = derivative(state, input, geom);
  VehicleState next;
  next.px = state.px + dt * rate.px;
  next.py = state.py + dt * rate.py;
  next.v = state.v + dt * rate.v;
  next.psi = state.psi + dt * rate.psi;
  return next;
}

StepJacobian step_jacobian(const VehicleState& state, const ControlInput& input,
                           const VehicleGeometry& geom, double dt) {
  const double ratio = geom.lr / (geom.lf + geom.lr);
  const double t = std::tan(input.steer);
  const double beta = std::atan(ratio * t);
  const double c = std::cos(state.psi + beta);
  const double s = std::sin(state.psi + beta);
  // d beta / d steer
  const double sec2 = 1.0 + t * t;
  const double dbeta = ratio * sec2 / (1.0 + ratio * ratio * t * t);

  Eigen::Matrix4d A = Eigen::Matrix4d::Identity();
  A(0, 2) = dt * c;
  A(0, 3) = -dt * state.v * s;
  A(1, 2) = dt * s;
  A(1, 3) = dt * state.v * c;
  A(3, 2) = dt * std::sin(beta) / geom.lr;

  Eigen::Matrix<double, 4, 2> B = Eigen::Matrix<double, 4, 2>::Zero();
  B(2, 0) = dt;
  B(0, 1) = -dt * state.v * s * dbeta;
  B(1, 1) = dt * state.v * c * dbeta;
  B(3, 1) = dt * state.v / geom.lr * std::cos(beta) * dbeta;

  return {A, B};
}

}  // namespace lcmpc
