#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

namespace lcmpc {

/// Smooth inequality-constrained NLP in the form
///   minimize f(x)  s.t.  cons_lower <= c(x) <= cons_upper,
///            var_lower <= x <= var_upper.
/// Callbacks compute derivatives only when the output pointers are non-null.
struct NlpProblem {
  int num_vars{0};
  Eigen::VectorXd var_lower;
  Eigen::VectorXd var_upper;
  Eigen::VectorXd cons_lower;
  Eigen::VectorXd cons_upper;

  std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)> objective;
  std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& values,
                     Eigen::MatrixXd* jacobian)>
      constraints;
  /// Optional positive-semidefinite curvature model (e.g. Gauss-Newton).
  /// When set, the solver evaluates it at every iterate instead of running
  /// quasi-Newton updates.
  std::function<void(const Eigen::VectorXd& x, Eigen::MatrixXd& h)> hessian;

  int num_cons() const { return static_cast<int>(cons_lower.size()); }
};

/// Dimensions, bounds and row structure as JSON (debugging aid).
std::string dump_problem_json(const NlpProblem& problem);

}  // namespace lcmpc
