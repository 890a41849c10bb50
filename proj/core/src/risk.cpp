#include "lcmpc/risk.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace lcmpc {

double sigmoid(double x, const SigmoidParams& params) {
  const double t = -params.steepness * (x - params.shift);
  if (t > 0.0) {
    const double e = std::exp(-t);  // <= 1
    return params.amplitude * e / (1.0 + e);
  }
  return params.amplitude / (1.0 + std::exp(t));
}

double sigmoid_slope(double x, const SigmoidParams& params) {
  const double s = sigmoid(x, params) / params.amplitude;  // in (0,1)
  return params.amplitude * params.steepness * s * (1.0 - s);
}

double calibrate_shift(double amplitude, double steepness) {
  if (amplitude <= 1.0) {
    throw std::invalid_argument("calibrate_shift: amplitude must exceed 1");
  }
  if (steepness <= 0.0) {
    throw std::invalid_argument("calibrate_shift: steepness must be positive");
  }
  return std::log(amplitude - 1.0) / steepness;
}

double exact_violation(const DiscreteRandomQuantity& q) {
  double p = 0.0;
  for (int i = 0; i < q.outcomes.size(); ++i) {
    if (q.outcomes[i] > 0.0) {
      p += q.probs[i];
    }
  }
  return p;
}

double violation_estimate_sigmoid(const DiscreteRandomQuantity& q,
                                  const SigmoidParams& params) {
  double est = 0.0;
  for (int i = 0; i < q.outcomes.size(); ++i) {
    est += q.probs[i] * sigmoid(q.outcomes[i], params);
  }
  return est;
}

AvarEstimate violation_estimate_avar(const DiscreteRandomQuantity& q, double gamma) {
  if (gamma <= 0.0 || gamma >= 1.0) {
    throw std::invalid_argument("violation_estimate_avar: gamma must lie in (0,1)");
  }
  // h(t) = t + (1/gamma) sum p_i [zeta_i - t]_+ is piecewise affine and
  // convex; a minimizer is attained at an outcome breakpoint.
  const auto h = [&](double t) {
    double e = 0.0;
    for (int i = 0; i < q.outcomes.size(); ++i) {
      e += q.probs[i] * std::max(q.outcomes[i] - t, 0.0);
    }
    return t + e / gamma;
  };
  double t_star = q.outcomes[0];
  double best = h(t_star);
  for (int i = 1; i < q.outcomes.size(); ++i) {
    const double val = h(q.outcomes[i]);
    if (val < best) {
      best = val;
      t_star = q.outcomes[i];
    }
  }
  AvarEstimate result;
  result.t_star = t_star;
  if (t_star >= 0.0) {
    result.applicable = false;
    return result;
  }
  result.applicable = true;
  result.c_star = -1.0 / t_star;
  double est = 0.0;
  for (int i = 0; i < q.outcomes.size(); ++i) {
    est += q.probs[i] * std::max(1.0 + result.c_star * q.outcomes[i], 0.0);
  }
  result.estimate = est;
  return result;
}

}  // namespace lcmpc
