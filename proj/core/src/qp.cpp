#include "lcmpc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace lcmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// One-sided constraint normal' x >= bound, where normal = sign * A.row(row).
struct Side {
  int row;
  double sign;  // +1: lower bound side, -1: upper bound side
  double bound;
  double scale;  // inf-norm of the row, used to normalize slack tests
};

struct GiResult {
  bool feasible{false};
  bool capped{false};  // iteration cap hit; x is exact for the active subset
  Eigen::VectorXd x;
  Eigen::VectorXd y;  // per-row multipliers, OSQP sign convention
  int iterations{0};
};

/// Goldfarb-Idnani dual active-set method for
///   min 0.5 x'Px + q'x  s.t.  sides[i].normal' x >= sides[i].bound.
/// Exact in finitely many active-set changes; reports infeasibility.
GiResult solve_gi(const Eigen::LLT<Eigen::MatrixXd>& llt, const Eigen::VectorXd& q,
                  const Eigen::MatrixXd& a, const std::vector<Side>& sides,
                  int max_iter, double tol) {
  const int n = static_cast<int>(q.size());
  const int nc = static_cast<int>(sides.size());

  GiResult res;
  res.x = -llt.solve(q);
  res.y = Eigen::VectorXd::Zero(a.rows());

  // J = L^-T; the first na columns span the active normals' image.
  Eigen::MatrixXd j = Eigen::MatrixXd::Identity(n, n);
  llt.matrixU().solveInPlace(j);
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(n, n);
  std::vector<int> active;
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);

  Eigen::VectorXd row_vals = a * res.x;
  std::vector<char> is_active(nc, 0);

  const auto side_value = [&](const Side& s) {
    return s.sign * row_vals[s.row] - s.bound;
  };
  // Slack comparisons must survive the rounding of A*x when x is large.
  const auto abs_floor = [&]() {
    return 1e-11 * (1.0 + row_vals.lpNorm<Eigen::Infinity>());
  };

  Eigen::VectorXd d(n), z(n), rstep(n), normal(n);
  for (int iter = 0; iter < max_iter; ++iter) {
    ++res.iterations;
    // Most violated inactive side, slack normalized by the row scale.
    int chosen = -1;
    double worst = -tol;
    const double floor = abs_floor();
    for (int i = 0; i < nc; ++i) {
      if (is_active[i]) continue;
      const double sval = side_value(sides[i]);
      if (sval >= -floor) continue;
      const double v = sval / sides[i].scale;
      if (v < worst) {
        worst = v;
        chosen = i;
      }
    }
    if (chosen < 0) {
      res.feasible = true;
      for (std::size_t k = 0; k < active.size(); ++k) {
        const Side& s = sides[active[k]];
        res.y[s.row] += -s.sign * u[k];
      }
      return res;
    }

    const Side& cs = sides[chosen];
    normal = cs.sign * a.row(cs.row).transpose();
    double u_plus = 0.0;

    for (int inner = 0; inner <= n + 1; ++inner) {
      const int na = static_cast<int>(active.size());
      d.noalias() = j.transpose() * normal;
      z.setZero();
      if (na < n) {
        z.noalias() = j.rightCols(n - na) * d.tail(n - na);
      }
      if (na > 0) {
        rstep.head(na) =
            r.topLeftCorner(na, na).triangularView<Eigen::Upper>().solve(d.head(na));
      }

      double t1 = kInf;
      int drop = -1;
      for (int k = 0; k < na; ++k) {
        if (rstep[k] > 1e-12) {
          const double t = u[k] / rstep[k];
          if (t < t1) {
            t1 = t;
            drop = k;
          }
        }
      }
      const double ztp = z.dot(normal);
      const double sval = side_value(cs);
      const double t2 = ztp > 1e-12 ? -sval / ztp : kInf;
      const double t = std::min(t1, t2);
      if (!std::isfinite(t)) {
        return res;  // infeasible: no primal progress and duals unbounded
      }

      if (std::isfinite(t2)) {
        res.x += t * z;
        row_vals += t * (a * z);
      }
      if (na > 0) u.head(na) -= t * rstep.head(na);
      u_plus += t;

      if (t == t2) {
        // Add the chosen side: rotate d's tail into position na.
        for (int l = n - 1; l > na; --l) {
          const double p1 = d[l - 1], p2 = d[l];
          const double hyp = std::hypot(p1, p2);
          if (hyp < 1e-300) continue;
          const double cth = p1 / hyp, sth = p2 / hyp;
          d[l - 1] = hyp;
          d[l] = 0.0;
          for (int rr = 0; rr < n; ++rr) {
            const double v1 = j(rr, l - 1), v2 = j(rr, l);
            j(rr, l - 1) = cth * v1 + sth * v2;
            j(rr, l) = -sth * v1 + cth * v2;
          }
        }
        r.col(na).head(na + 1) = d.head(na + 1);
        active.push_back(chosen);
        is_active[chosen] = 1;
        u[na] = u_plus;
        break;
      }

      // Drop the blocking side and restore R to triangular form.
      is_active[active[drop]] = 0;
      active.erase(active.begin() + drop);
      const int na1 = na - 1;
      for (int col = drop; col < na1; ++col) r.col(col) = r.col(col + 1);
      u.segment(drop, na1 - drop) = u.segment(drop + 1, na1 - drop);
      u[na1] = 0.0;
      r.col(na1).setZero();
      for (int col = drop; col < na1; ++col) {
        const double p1 = r(col, col), p2 = r(col + 1, col);
        const double hyp = std::hypot(p1, p2);
        if (hyp < 1e-300) continue;
        const double cth = p1 / hyp, sth = p2 / hyp;
        r(col, col) = hyp;
        r(col + 1, col) = 0.0;
        for (int cc = col + 1; cc < na1; ++cc) {
          const double v1 = r(col, cc), v2 = r(col + 1, cc);
          r(col, cc) = cth * v1 + sth * v2;
          r(col + 1, cc) = -sth * v1 + cth * v2;
        }
        for (int rr = 0; rr < n; ++rr) {
          const double v1 = j(rr, col), v2 = j(rr, col + 1);
          j(rr, col) = cth * v1 + sth * v2;
          j(rr, col + 1) = -sth * v1 + cth * v2;
        }
      }
    }
  }
  res.capped = true;
  for (std::size_t k = 0; k < active.size(); ++k) {
    const Side& s = sides[active[k]];
    res.y[s.row] += -s.sign * u[k];
  }
  return res;
}

}  // namespace

QpResult solve_box_qp(const BoxQp& qp, const Eigen::VectorXd& x0,
                      const Eigen::VectorXd& y0, const QpOptions& options) {
  (void)x0;
  (void)y0;
  const int n = static_cast<int>(qp.q.size());
  const int m = static_cast<int>(qp.lower.size());
  if (qp.P.rows() != n || qp.A.rows() != m || qp.A.cols() != n ||
      qp.penalty.size() != m) {
    throw std::invalid_argument("solve_box_qp: dimension mismatch");
  }

  // Jittered Cholesky: the caller's quasi-Newton Hessian can lose definiteness
  // to rounding.
  Eigen::LLT<Eigen::MatrixXd> llt(qp.P);
  double jitter = 1e-10;
  while (llt.info() != Eigen::Success && jitter < 1e6) {
    Eigen::MatrixXd p = qp.P;
    p.diagonal().array() += jitter;
    llt.compute(p);
    jitter *= 100.0;
  }
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("solve_box_qp: Hessian not positive definite");
  }

  // Row equilibration: the caller mixes rows of very different magnitudes
  // (near-flat surrogate gradients next to steep quadratics), which makes the
  // active-set pivoting cycle. All sides are normalized to unit row norm; the
  // multipliers are mapped back afterwards.
  Eigen::VectorXd scale(m);
  Eigen::MatrixXd a_norm(m, n);
  for (int i = 0; i < m; ++i) {
    scale[i] = std::max(qp.A.row(i).norm(), 1e-12);
    a_norm.row(i) = qp.A.row(i) / scale[i];
  }

  // Exact l1-penalty subproblem. Rows violated at x = 0 keep their violation
  // pattern inside the QP: the penalty subgradient joins the linear term and
  // the row is only constrained at the feasibility kink, so it may improve up
  // to feasible but not overshoot. With that treatment x = 0 is always
  // admissible and the subproblem cannot be infeasible by construction.
  const double tol = std::max(options.eps_abs, 1e-10);
  Eigen::VectorXd q_eff = qp.q;
  Eigen::VectorXd y_base = Eigen::VectorXd::Zero(m);
  std::vector<Side> sides;
  sides.reserve(2 * m);
  for (int i = 0; i < m; ++i) {
    const double lo = qp.lower[i];
    const double hi = qp.upper[i];
    const bool soft = std::isfinite(qp.penalty[i]);
    if (soft && hi < 0.0) {
      // Violated above: merit falls at rate penalty per unit of decrease
      // until the row reaches its upper bound.
      q_eff += qp.penalty[i] * qp.A.row(i).transpose();
      y_base[i] = qp.penalty[i];
      sides.push_back({i, 1.0, hi / scale[i], 1.0});
    } else if (soft && lo > 0.0) {
      q_eff -= qp.penalty[i] * qp.A.row(i).transpose();
      y_base[i] = -qp.penalty[i];
      sides.push_back({i, -1.0, -lo / scale[i], 1.0});
    } else {
      if (std::isfinite(lo)) sides.push_back({i, 1.0, lo / scale[i], 1.0});
      if (std::isfinite(hi)) sides.push_back({i, -1.0, -hi / scale[i], 1.0});
    }
  }
  const GiResult gi = solve_gi(llt, q_eff, a_norm, sides, options.max_iter, tol);

  QpResult res;
  const bool usable = gi.feasible || gi.capped;
  res.x = usable ? gi.x : Eigen::VectorXd::Zero(n);
  res.y = usable ? Eigen::VectorXd(y_base + gi.y.cwiseQuotient(scale))
                 : Eigen::VectorXd::Zero(m);
  res.iterations = gi.iterations;
  res.converged = gi.feasible;
  res.z = (qp.A * res.x).cwiseMax(qp.lower.cwiseMax(-1e30)).cwiseMin(qp.upper.cwiseMin(1e30));
  const Eigen::VectorXd vals = qp.A * res.x;
  double viol = 0.0;
  for (int i = 0; i < m; ++i) {
    viol = std::max({viol, qp.lower[i] - vals[i], vals[i] - qp.upper[i]});
  }
  res.primal_residual = viol;
  res.dual_residual = 0.0;
  return res;
}

}  // namespace lcmpc
