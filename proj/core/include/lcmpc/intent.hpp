#pragma once

#include <deque>
#include <span>
#include <string>
#include <vector>

#include "lcmpc/behavior.hpp"
#include "lcmpc/dynamics.hpp"

namespace lcmpc {

/// Feature map phi(zbar) = [1; (z_ego - z_target) ./ scales].
/// The leading 1 is the bias term; the scales condition the optimization
/// and are part of the model record.
struct FeatureMap {
  Eigen::Vector4d scales{10.0, 10.0, 10.0, 0.25};  // px, py, v, psi

  int size() const { return 5; }
  Eigen::VectorXd eval(const JointState& joint) const;
  /// Constant Jacobian d phi / d zbar (size x 8).
  Eigen::MatrixXd state_jacobian() const;
};

/// Multinomial logistic model of the maneuver distribution,
/// P_i(zbar) = softmax_i(theta_i' phi(zbar)).
struct IntentModel {
  Eigen::MatrixXd theta;  // n_feat x n_modes
  FeatureMap features;

  int num_modes() const { return static_cast<int>(theta.cols()); }

  /// Probability vector over maneuvers; strictly positive, sums to 1.
  Eigen::VectorXd predict(const JointState& joint) const;
  /// d P / d zbar (num_modes x 8).
  Eigen::MatrixXd predict_state_jacobian(const JointState& joint) const;

  void save(const std::string& path) const;
  static IntentModel load(const std::string& path);

  static IntentModel zero(const FeatureMap& features, int num_modes = kNumManeuvers);
};

struct Observation {
  JointState state;
  Maneuver maneuver;
};

/// Ring buffer of the most recent (state, maneuver) pairs.
class ObservationWindow {
 public:
  explicit ObservationWindow(int capacity) : capacity_(capacity) {}

  void push(const Observation& obs);
  int size() const { return static_cast<int>(buffer_.size()); }
  int capacity() const { return capacity_; }
  bool empty() const { return buffer_.empty(); }
  std::vector<Observation> items() const { return {buffer_.begin(), buffer_.end()}; }

 private:
  int capacity_;
  std::deque<Observation> buffer_;
};

/// Negative log-likelihood of the data under theta, plus optional ridge and
/// proximal terms. Gradient (same shape as theta) written when requested.
/// Exposed so tests can finite-difference the fitting objectives.
double intent_objective(const Eigen::MatrixXd& theta, std::span<const Observation> data,
                        const FeatureMap& features, double ridge,
                        const Eigen::MatrixXd* prox_center, double lambda,
                        Eigen::MatrixXd* grad);

/// Offline maximum-likelihood fit (ridge-regularized), damped Newton descent.
/// Converges to gradient norm <= 1e-6 * (1 + |loss|).
IntentModel fit_offline(std::span<const Observation> data, const FeatureMap& features,
                        double ridge);

/// Moving-horizon update: argmin lambda * ||theta - theta_prev||_F^2 + NLL(window).
/// lambda must be positive (strict convexity).
IntentModel update_online(const IntentModel& model, const ObservationWindow& window,
                          double lambda);

/// Classifies an observed target acceleration into the nearest base maneuver
/// using nominal parameters; ties break toward kBrake.
Maneuver label_maneuver(double observed_accel, const JointState& joint,
                        const TargetParams& nominal);

}  // namespace lcmpc
