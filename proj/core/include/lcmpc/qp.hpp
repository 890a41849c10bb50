#pragma once

#include <Eigen/Dense>

namespace lcmpc {

/// Convex QP with two-sided linear constraints and optional per-row l1
/// relaxation:
///   minimize 0.5 x'Px + q'x + sum_i penalty_i * dist(A_i x, [lower_i, upper_i])
/// Rows with penalty_i = inf are enforced exactly (indicator). This is the
/// subproblem shape of an l1 exact-penalty SQP step.
struct BoxQp {
  Eigen::MatrixXd P;        // symmetric PSD
  Eigen::VectorXd q;
  Eigen::MatrixXd A;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  Eigen::VectorXd penalty;  // per-row l1 weight; inf = hard row
};

struct QpOptions {
  int max_iter{4000};  // active-set changes before returning the partial solve
  double eps_abs{1e-9};
  double eps_rel{1e-9};
};

struct QpResult {
  Eigen::VectorXd x;
  Eigen::VectorXd z;  // projected row values A x
  Eigen::VectorXd y;  // row multipliers
  int iterations{0};
  double primal_residual{0.0};
  double dual_residual{0.0};
  bool converged{false};
};

/// Dual active-set solver (Goldfarb-Idnani) on the equivalent hard-constrained
/// problem: soft rows violated at x = 0 contribute their penalty subgradient
/// to the linear term and are constrained only at the feasibility kink, so the
/// subproblem is never infeasible by construction. Rows are equilibrated to
/// unit norm internally. Exact in finitely many active-set changes and
/// deterministic for identical inputs. x0/y0 are accepted for interface
/// compatibility and may be empty.
QpResult solve_box_qp(const BoxQp& qp, const Eigen::VectorXd& x0,
                      const Eigen::VectorXd& y0, const QpOptions& options = {});

}  // namespace lcmpc
