#pragma once

#include <string>

#include "lcmpc/nlp_problem.hpp"
#include "lcmpc/scenario_tree.hpp"

namespace lcmpc {

struct SolverOptions {
  int max_iter{100};
  double tol_kkt{1e-6};
  double tol_constraint{1e-6};
  double penalty_init{10.0};
  double penalty_max{3e4};
  int qp_max_iter{350};
  double qp_tol{1e-8};
  int line_search_max{30};
  double bfgs_init{1.0};
  // Acceptable-point exit: stop as optimal after `acceptable_count`
  // consecutive accepted steps that keep the violation below
  // `acceptable_viol` and change the objective by less than a relative
  // `acceptable_df`. Catches active-set chatter near the solution.
  double acceptable_viol{1e-4};
  double acceptable_df{1e-4};
  int acceptable_count{3};
  // Stall exit: stop when neither the best objective nor the best violation
  // seen so far improves for this many consecutive iterations. Catches both
  // plateaus of the constraint surrogate (no descent direction exists) and
  // active-set oscillation near a solution.
  int stall_iters{10};
  std::string trace_path;  // optional per-iteration CSV trace
};

enum class SolveStatus { kOptimal, kMaxIter, kInfeasible };

struct SolveResult {
  SolveStatus status{SolveStatus::kMaxIter};
  Eigen::VectorXd solution;
  double objective{0.0};
  double max_violation{0.0};
  int iterations{0};
  double kkt_residual{0.0};
  std::string diagnostic;
};

const char* to_string(SolveStatus status);

/// SQP with an l1 exact-penalty line search (Sl1QP); the Hessian model is the
/// problem's curvature callback when present, else damped BFGS. Subproblems
/// are solved by the active-set QP in qp.hpp over a working set of violated
/// and near-active rows. Deterministic: identical inputs and options produce
/// identical iterates.
SolveResult solve(const NlpProblem& problem, const Eigen::VectorXd& initial_guess,
                  const SolverOptions& options = {});

/// Receding-horizon warm start: every non-leaf node is seeded from the
/// previous solution at its same-mode child (the mode-0 child at branching
/// stages without an incoming mode); the final control stage duplicates the
/// previous last inputs. Falls back to a zero guess on dimension mismatch.
Eigen::VectorXd warm_start_shift(const Eigen::VectorXd& prev_solution,
                                 const TreeTopology& topology);

}  // namespace lcmpc
