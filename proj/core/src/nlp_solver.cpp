#include "lcmpc/nlp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <vector>

#include "lcmpc/qp.hpp"

namespace lcmpc {

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::kOptimal:
      return "optimal";
    case SolveStatus::kMaxIter:
      return "max_iter";
    case SolveStatus::kInfeasible:
      return "infeasible";
  }
  return "unknown";
}

namespace {

double box_distance(double v, double l, double u) {
  if (v < l) return l - v;
  if (v > u) return v - u;
  return 0.0;
}

double total_violation(const Eigen::VectorXd& c, const Eigen::VectorXd& l,
                       const Eigen::VectorXd& u) {
  double s = 0.0;
  for (int i = 0; i < c.size(); ++i) {
    s += box_distance(c[i], l[i], u[i]);
  }
  return s;
}

double max_violation(const Eigen::VectorXd& c, const Eigen::VectorXd& l,
                     const Eigen::VectorXd& u) {
  double s = 0.0;
  for (int i = 0; i < c.size(); ++i) {
    s = std::max(s, box_distance(c[i], l[i], u[i]));
  }
  return s;
}

/// Working set: rows that are violated or whose slack is within reach of the
/// expected step. `reach` estimates per-row motion (from the previous step
/// direction when available, else a conservative gradient bound). Dropping
/// the remaining rows from the subproblem is safe: the merit function always
/// evaluates the full constraint vector, and a dropped row that becomes
/// violated is selected on the next iteration.
std::vector<int> select_rows(const Eigen::VectorXd& c, const Eigen::VectorXd& l,
                             const Eigen::VectorXd& u, const Eigen::VectorXd& reach,
                             const Eigen::MatrixXd& jac, int cap) {
  std::vector<int> rows;
  rows.reserve(c.size());
  std::vector<std::pair<double, int>> near;  // (normalized slack, row)
  for (int i = 0; i < c.size(); ++i) {
    const double slack = std::min(c[i] - l[i], u[i] - c[i]);
    if (slack < -1e-12) {
      rows.push_back(i);  // violated rows always participate
    } else if (slack <= reach[i] + 1e-9) {
      near.emplace_back(slack / std::max(jac.row(i).norm(), 1e-12), i);
    }
  }
  // Keep the subproblem small: beyond the cap, admit only the rows closest to
  // their bound relative to how fast they can move.
  const std::size_t room =
      cap > static_cast<int>(rows.size())
          ? static_cast<std::size_t>(cap) - rows.size()
          : 0;
  if (near.size() > room) {
    std::partial_sort(near.begin(), near.begin() + static_cast<std::ptrdiff_t>(room),
                      near.end());
    near.resize(room);
  }
  for (const auto& [slack, i] : near) {
    rows.push_back(i);
  }
  std::sort(rows.begin(), rows.end());
  return rows;
}

}  // namespace

SolveResult solve(const NlpProblem& problem, const Eigen::VectorXd& initial_guess,
                  const SolverOptions& options) {
  const int n = problem.num_vars;
  const int m = problem.num_cons();
  const double inf = std::numeric_limits<double>::infinity();

  SolveResult result;
  Eigen::VectorXd x = (initial_guess.size() == n) ? initial_guess
                                                  : Eigen::VectorXd::Zero(n);
  x = x.cwiseMax(problem.var_lower).cwiseMin(problem.var_upper);

  std::ofstream trace;
  if (!options.trace_path.empty()) {
    trace.open(options.trace_path);
    trace << "iter,objective,violation,step_norm,penalty,kkt,qp_rows,qp_iters,qp_resid\n";
  }

  Eigen::VectorXd grad(n), c(m);
  Eigen::MatrixXd jac(m, n);
  double f = problem.objective(x, &grad);
  problem.constraints(x, c, &jac);
  if (!std::isfinite(f) || !grad.allFinite() || !c.allFinite() || !jac.allFinite()) {
    result.status = SolveStatus::kInfeasible;
    result.diagnostic = "non-finite callback values at the initial point";
    result.solution = x;
    return result;
  }

  const bool exact_curvature = static_cast<bool>(problem.hessian);
  Eigen::MatrixXd hessian;
  if (exact_curvature) {
    problem.hessian(x, hessian);
  } else {
    hessian = options.bfgs_init * Eigen::MatrixXd::Identity(n, n);
  }
  double penalty = options.penalty_init;
  Eigen::VectorXd y_full = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd y_bounds = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd row_reach;  // per-row motion estimate for the working set
  int consecutive_ls_failures = 0;
  int acceptable_streak = 0;
  int stall_streak = 0;
  double best_f = f;
  double best_viol = max_violation(c, problem.cons_lower, problem.cons_upper);

  // Incumbent iterate: least violation beyond the acceptable band, then least
  // objective. The line search judges steps by the penalty merit, which can
  // trade feasibility for objective on a flat stretch of the constraint
  // surrogate; the returned point must never be worse than one already seen.
  const double viol_band = std::max(options.tol_constraint, options.acceptable_viol);
  const auto excess = [&](double viol) { return std::max(viol - viol_band, 0.0); };
  Eigen::VectorXd inc_x = x;
  double inc_f = f;
  double inc_viol = best_viol;
  const auto incumbent_update = [&](const Eigen::VectorXd& xt, double ft, double violt) {
    if (excess(violt) < excess(inc_viol) - 1e-12 ||
        (excess(violt) <= excess(inc_viol) + 1e-12 && ft < inc_f)) {
      inc_x = xt;
      inc_f = ft;
      inc_viol = violt;
    }
  };

  double kkt = inf;
  int iter = 0;
  for (; iter < options.max_iter; ++iter) {
    const double viol_l1 = total_violation(c, problem.cons_lower, problem.cons_upper);
    const double viol_max = max_violation(c, problem.cons_lower, problem.cons_upper);

    if (row_reach.size() != m) {
      row_reach.resize(m);
      for (int i = 0; i < m; ++i) {
        row_reach[i] = 5.0 * jac.row(i).lpNorm<1>();
      }
    }
    const std::vector<int> rows =
        select_rows(c, problem.cons_lower, problem.cons_upper, row_reach, jac, 2 * n);
    const int ms = static_cast<int>(rows.size());

    // Selected constraint rows followed by hard variable-bound rows.
    BoxQp qp;
    qp.P = hessian;
    if (exact_curvature) {
      // Levenberg floor: a Gauss-Newton model can be nearly singular along
      // low-probability branch controls, which would blow up the subproblem's
      // unconstrained minimizer and its conditioning.
      qp.P.diagonal().array() += 1e-4;
    }
    qp.q = grad;
    qp.A.resize(ms + n, n);
    qp.lower.resize(ms + n);
    qp.upper.resize(ms + n);
    qp.penalty.resize(ms + n);
    for (int k = 0; k < ms; ++k) {
      const int i = rows[k];
      qp.A.row(k) = jac.row(i);
      qp.lower[k] = problem.cons_lower[i] - c[i];
      qp.upper[k] = problem.cons_upper[i] - c[i];
    }
    qp.A.bottomRows(n).setIdentity();
    qp.lower.tail(n) = problem.var_lower - x;
    qp.upper.tail(n) = problem.var_upper - x;
    qp.penalty.tail(n).setConstant(inf);

    QpOptions qp_opts;
    qp_opts.max_iter = options.qp_max_iter;
    qp_opts.eps_abs = options.qp_tol;
    qp_opts.eps_rel = options.qp_tol;

    Eigen::VectorXd y0(ms + n);
    for (int k = 0; k < ms; ++k) y0[k] = y_full[rows[k]];
    y0.tail(n) = y_bounds;

    // Steering rule for the exact l1 penalty: accept the subproblem step only
    // if it removes a solid fraction of the linearized violation, otherwise
    // raise the penalty and re-solve. This avoids both a too-small penalty
    // (iterates drift infeasible) and runaway growth (the kink multipliers
    // scale with the penalty, so they cannot drive the update themselves).
    double viol_sel = 0.0;
    for (int k = 0; k < ms; ++k) {
      viol_sel += box_distance(0.0, qp.lower[k], qp.upper[k]);
    }
    QpResult qp_res;
    for (int steer = 0; steer < 4; ++steer) {
      qp.penalty.head(ms).setConstant(penalty);
      qp_res = solve_box_qp(qp, Eigen::VectorXd::Zero(n), y0, qp_opts);
      if (viol_sel <= options.tol_constraint || penalty >= options.penalty_max) {
        break;
      }
      const Eigen::VectorXd step_rows = qp.A.topRows(ms) * qp_res.x;
      double lin_after = 0.0;
      for (int k = 0; k < ms; ++k) {
        lin_after += box_distance(step_rows[k], qp.lower[k], qp.upper[k]);
      }
      if (lin_after <= 0.5 * viol_sel) {
        break;
      }
      penalty = std::min(penalty * 10.0, options.penalty_max);
    }
    const Eigen::VectorXd d = qp_res.x;
    y_full.setZero();
    for (int k = 0; k < ms; ++k) y_full[rows[k]] = qp_res.y[k];
    y_bounds = qp_res.y.tail(n);

    kkt = (grad + jac.transpose() * y_full + y_bounds).lpNorm<Eigen::Infinity>();
    const double step_norm = d.lpNorm<Eigen::Infinity>();

    if (trace.is_open()) {
      trace << iter << ',' << f << ',' << viol_max << ',' << step_norm << ',' << penalty
            << ',' << kkt << ',' << ms << ',' << qp_res.iterations << ','
            << qp_res.primal_residual << "\n";
    }

    if (kkt <= options.tol_kkt && viol_max <= options.tol_constraint) {
      result.status = SolveStatus::kOptimal;
      break;
    }
    if (!qp_res.converged && step_norm <= 1e-12) {
      // The subproblem hit its iteration cap without a usable step; report
      // the budget exhaustion rather than claiming a stationary point.
      result.status = SolveStatus::kMaxIter;
      result.diagnostic = "subproblem iteration limit reached";
      break;
    }
    if (step_norm <= 1e-12) {
      result.status = viol_max <= std::max(options.tol_constraint, options.acceptable_viol)
                          ? SolveStatus::kOptimal
                          : SolveStatus::kInfeasible;
      if (result.status == SolveStatus::kInfeasible) {
        result.diagnostic = "stationary point of the penalty function, constraints violated";
      }
      break;
    }
    row_reach = 4.0 * (jac * d).cwiseAbs();
    for (int i = 0; i < m; ++i) {
      row_reach[i] += 0.05 * jac.row(i).lpNorm<Eigen::Infinity>();
    }

    // l1 merit line search with one second-order correction attempt: the
    // full step often re-violates the curved active constraints by a small
    // amount, so before backtracking we retry it with a minimum-norm
    // correction computed from the constraint values at the trial point.
    const double merit = f + penalty * viol_l1;
    const double model_decrease = grad.dot(d) - penalty * viol_l1;
    const auto merit_at = [&](const Eigen::VectorXd& xt, double& ft,
                              Eigen::VectorXd& ct) {
      ft = problem.objective(xt, nullptr);
      problem.constraints(xt, ct, nullptr);
      if (!std::isfinite(ft) || !ct.allFinite()) {
        return inf;
      }
      return ft + penalty * total_violation(ct, problem.cons_lower, problem.cons_upper);
    };
    // A merit decrease alone is not enough: on a flat stretch of the
    // constraint surrogate the objective gain can pay for a fence-jump into
    // deep violation where the penalty gradient vanishes. Cap the violation
    // growth per step so the backtracking stays near the boundary instead.
    const double viol_cap = std::max(1.5 * viol_max, 0.05);
    const auto acceptable = [&](double merit_new, double viol_new, double alpha) {
      if (viol_new > viol_cap) {
        return false;
      }
      return merit_new <= merit + 1e-4 * alpha * std::min(model_decrease, 0.0) ||
             merit_new < merit - 1e-14 * (1.0 + std::abs(merit));
    };

    // Minimum-norm step restoring the rows violated at `ct`, built on the
    // current-point Jacobian; used for the second-order correction during the
    // line search and to polish accepted steps that leave residual violation.
    const auto feasibility_correction = [&](const Eigen::VectorXd& xt,
                                            const Eigen::VectorXd& ct) {
      std::vector<int> active;
      Eigen::VectorXd resid(m);
      for (int i = 0; i < m; ++i) {
        if (ct[i] > problem.cons_upper[i]) {
          resid[static_cast<int>(active.size())] = ct[i] - problem.cons_upper[i];
          active.push_back(i);
        } else if (ct[i] < problem.cons_lower[i]) {
          resid[static_cast<int>(active.size())] = ct[i] - problem.cons_lower[i];
          active.push_back(i);
        }
      }
      const int na = static_cast<int>(active.size());
      Eigen::VectorXd xc = xt;
      if (na > 0) {
        Eigen::MatrixXd v(na, n);
        for (int k = 0; k < na; ++k) v.row(k) = jac.row(active[k]);
        Eigen::MatrixXd gram = v * v.transpose();
        gram.diagonal().array() += 1e-10;
        xc -= v.transpose() * gram.ldlt().solve(resid.head(na));
        xc = xc.cwiseMax(problem.var_lower).cwiseMin(problem.var_upper);
      }
      return xc;
    };

    double alpha = 1.0;
    bool accepted = false;
    Eigen::VectorXd x_new(n), c_new(m);
    Eigen::VectorXd grad_new(n);
    Eigen::MatrixXd jac_new(m, n);
    double f_new = 0.0;
    double merit_acc = inf;
    for (int ls = 0; ls < options.line_search_max; ++ls) {
      x_new = (x + alpha * d).cwiseMax(problem.var_lower).cwiseMin(problem.var_upper);
      const double merit_new = merit_at(x_new, f_new, c_new);
      const double viol_trial =
          std::isfinite(merit_new)
              ? max_violation(c_new, problem.cons_lower, problem.cons_upper)
              : inf;
      if (acceptable(merit_new, viol_trial, alpha)) {
        accepted = true;
        merit_acc = merit_new;
        break;
      }
      if (ls == 0 && std::isfinite(merit_new)) {
        const Eigen::VectorXd x_soc = feasibility_correction(x_new, c_new);
        double f_soc = 0.0;
        Eigen::VectorXd c_soc(m);
        const double merit_soc = merit_at(x_soc, f_soc, c_soc);
        const double viol_soc =
            std::isfinite(merit_soc)
                ? max_violation(c_soc, problem.cons_lower, problem.cons_upper)
                : inf;
        if (acceptable(merit_soc, viol_soc, alpha)) {
          x_new = x_soc;
          f_new = f_soc;
          c_new = c_soc;
          accepted = true;
          merit_acc = merit_soc;
          break;
        }
      }
      alpha *= 0.5;
    }
    if (accepted &&
        max_violation(c_new, problem.cons_lower, problem.cons_upper) >
            options.tol_constraint) {
      const Eigen::VectorXd x_pol = feasibility_correction(x_new, c_new);
      double f_pol = 0.0;
      Eigen::VectorXd c_pol(m);
      const double merit_pol = merit_at(x_pol, f_pol, c_pol);
      if (merit_pol <= merit_acc + 1e-10 * (1.0 + std::abs(merit_acc))) {
        x_new = x_pol;
        f_new = f_pol;
        c_new = c_pol;
      }
    }
    if (!accepted) {
      // With a quasi-Newton model a stale Hessian is the usual culprit;
      // rebuild it once before giving up.
      ++consecutive_ls_failures;
      if (!exact_curvature && consecutive_ls_failures <= 2) {
        hessian = options.bfgs_init * Eigen::MatrixXd::Identity(n, n);
        continue;
      }
      result.status =
          viol_max <= std::max(options.tol_constraint, options.acceptable_viol)
              ? SolveStatus::kMaxIter
              : SolveStatus::kInfeasible;
      if (result.status == SolveStatus::kInfeasible) {
        result.diagnostic = "line search failed with violated constraints";
      }
      break;
    }
    consecutive_ls_failures = 0;

    f_new = problem.objective(x_new, &grad_new);
    problem.constraints(x_new, c_new, &jac_new);
    if (!std::isfinite(f_new) || !grad_new.allFinite() || !jac_new.allFinite()) {
      result.status = SolveStatus::kInfeasible;
      result.diagnostic = "non-finite callback values after step";
      break;
    }

    if (exact_curvature) {
      problem.hessian(x_new, hessian);
    } else {
      // Damped BFGS update on the Lagrangian gradient.
      const Eigen::VectorXd s = x_new - x;
      Eigen::VectorXd dg = (grad_new + jac_new.transpose() * y_full) -
                           (grad + jac.transpose() * y_full);
      const Eigen::VectorXd hs = hessian * s;
      const double shs = s.dot(hs);
      double sy = s.dot(dg);
      if (shs > 1e-16) {
        if (sy < 0.2 * shs) {
          const double phi = 0.8 * shs / (shs - sy);
          dg = phi * dg + (1.0 - phi) * hs;
          sy = s.dot(dg);
        }
        if (sy > 1e-16) {
          hessian -= (hs * hs.transpose()) / shs;
          hessian += (dg * dg.transpose()) / sy;
        }
      }
    }

    const double viol_new = max_violation(c_new, problem.cons_lower, problem.cons_upper);
    incumbent_update(x_new, f_new, viol_new);
    bool improved = false;
    if (f_new < best_f - 1e-6 * (1.0 + std::abs(best_f))) {
      improved = true;
    }
    if (viol_new < best_viol - 1e-8) {
      improved = true;
    }
    best_f = std::min(best_f, f_new);
    best_viol = std::min(best_viol, viol_new);
    stall_streak = improved ? 0 : stall_streak + 1;

    if (viol_new <= options.acceptable_viol &&
        std::abs(f_new - f) <= options.acceptable_df * (1.0 + std::abs(f_new))) {
      ++acceptable_streak;
    } else {
      acceptable_streak = 0;
    }

    x = x_new;
    f = f_new;
    grad = grad_new;
    c = c_new;
    jac = jac_new;

    if (acceptable_streak >= options.acceptable_count) {
      result.status = SolveStatus::kOptimal;
      ++iter;
      break;
    }
    if (options.stall_iters > 0 && stall_streak >= options.stall_iters) {
      result.status =
          viol_new <= std::max(options.tol_constraint, options.acceptable_viol)
              ? SolveStatus::kOptimal
              : SolveStatus::kInfeasible;
      if (result.status == SolveStatus::kInfeasible) {
        result.diagnostic = "no progress with violated constraints";
      }
      ++iter;
      break;
    }
  }

  if (iter == options.max_iter) {
    result.status = SolveStatus::kMaxIter;
  }
  result.solution = x;
  result.objective = f;
  result.max_violation = max_violation(c, problem.cons_lower, problem.cons_upper);
  result.iterations = iter;
  result.kkt_residual = kkt;
  if (excess(inc_viol) < excess(result.max_violation) - 1e-12 ||
      (excess(inc_viol) <= excess(result.max_violation) + 1e-12 &&
       inc_f < result.objective)) {
    result.solution = inc_x;
    result.objective = inc_f;
    result.max_violation = inc_viol;
    if (result.status == SolveStatus::kInfeasible && inc_viol <= viol_band) {
      result.status = SolveStatus::kMaxIter;
      result.diagnostic = "returned best stored iterate";
    }
  }
  if (result.status == SolveStatus::kOptimal && result.max_violation > viol_band) {
    result.status = SolveStatus::kMaxIter;
  }
  return result;
}

Eigen::VectorXd warm_start_shift(const Eigen::VectorXd& prev_solution,
                                 const TreeTopology& topology) {
  const int nu = 2 * topology.num_nonleaf();
  if (prev_solution.size() != nu) {
    return Eigen::VectorXd::Zero(nu);
  }
  Eigen::VectorXd guess(nu);
  for (int id = 0; id < topology.num_nonleaf(); ++id) {
    const TreeNode& node = topology.nodes[id];
    int source = id;  // final control stage duplicates the previous inputs
    if (node.stage < topology.horizon - 1) {
      // Child continuing with the incoming mode; the root (no incoming mode)
      // and branching stages fall back to the lowest mode index.
      source = node.children.front();
      for (const int c : node.children) {
        if (topology.nodes[c].mode == node.mode) {
          source = c;
          break;
        }
      }
    }
    guess[2 * id] = prev_solution[2 * source];
    guess[2 * id + 1] = prev_solution[2 * source + 1];
  }
  return guess;
}

}  // namespace lcmpc
