#pragma once

#include <Eigen/Dense>

namespace lcmpc {

/// Parameters of the sigmoid surrogate a / (1 + exp(-alpha (x - shift))).
/// With shift = calibrate_shift(a, alpha) the sigmoid upper-bounds the
/// indicator of (0, inf) on all of R.
struct SigmoidParams {
  double amplitude{1.2};  // a > 1
  double steepness{10.0}; // alpha > 0
  double shift{0.0};      // x_bar
};

/// Overflow-safe sigmoid evaluation.
double sigmoid(double x, const SigmoidParams& params);

/// Derivative of sigmoid with respect to x.
double sigmoid_slope(double x, const SigmoidParams& params);

/// Unique shift with sigmoid(0) = 1: shift = ln(a - 1) / alpha.
/// Throws for a <= 1 (no solution).
double calibrate_shift(double amplitude, double steepness);

/// Finitely supported random quantity.
struct DiscreteRandomQuantity {
  Eigen::VectorXd outcomes;
  Eigen::VectorXd probs;
};

/// Exact violation probability sum p_i * 1{zeta_i > 0}.
double exact_violation(const DiscreteRandomQuantity& q);

/// Sigmoid-smoothed estimate sum p_i * sigmoid(zeta_i); an upper bound on the
/// exact violation probability when params are calibrated.
double violation_estimate_sigmoid(const DiscreteRandomQuantity& q,
                                  const SigmoidParams& params);

struct AvarEstimate {
  bool applicable{false};  // false when t* >= 0 (AVaR >= 0 infeasible)
  double estimate{0.0};    // E[1 + c* zeta]_+
  double t_star{0.0};
  double c_star{0.0};
};

/// AVaR-based violation estimate: minimizes t + (1/gamma) E[zeta - t]_+
/// exactly over the outcome breakpoints, then evaluates the piecewise-affine
/// indicator bound E[1 + c* zeta]_+ with c* = -1/t*.
AvarEstimate violation_estimate_avar(const DiscreteRandomQuantity& q, double gamma);

}  // namespace lcmpc
