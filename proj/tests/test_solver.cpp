#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "lcmpc/nlp_solver.hpp"
#include "lcmpc/qp.hpp"

using namespace lcmpc;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

NlpProblem unconstrained_quadratic(const Eigen::MatrixXd& p, const Eigen::VectorXd& q) {
  NlpProblem prob;
  prob.num_vars = static_cast<int>(q.size());
  prob.var_lower = Eigen::VectorXd::Constant(prob.num_vars, -kInf);
  prob.var_upper = Eigen::VectorXd::Constant(prob.num_vars, kInf);
  prob.cons_lower.resize(0);
  prob.cons_upper.resize(0);
  prob.objective = [p, q](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    if (grad != nullptr) *grad = p * x + q;
    return 0.5 * x.dot(p * x) + q.dot(x);
  };
  const int n = prob.num_vars;
  prob.constraints = [n](const Eigen::VectorXd&, Eigen::VectorXd& values,
                         Eigen::MatrixXd* jac) {
    values.resize(0);
    if (jac != nullptr) jac->resize(0, n);
  };
  return prob;
}

}  // namespace

namespace {

// Brute-force oracle for 2-variable hard-row QPs: enumerate active sets of
// one-sided rows sign * (a x) >= sign * b, solve the equality KKT system and
// keep the feasible candidate with the smallest objective.
Eigen::Vector2d oracle_qp2(const BoxQp& qp) {
  struct OneSide {
    Eigen::RowVector2d a;
    double b;
  };
  std::vector<OneSide> rows;
  for (int i = 0; i < qp.lower.size(); ++i) {
    if (std::isfinite(qp.lower[i])) rows.push_back({qp.A.row(i), qp.lower[i]});
    if (std::isfinite(qp.upper[i])) rows.push_back({-qp.A.row(i), -qp.upper[i]});
  }
  const int m = static_cast<int>(rows.size());
  double best = std::numeric_limits<double>::infinity();
  Eigen::Vector2d best_x = Eigen::Vector2d::Zero();
  for (int mask = 0; mask < (1 << m); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < m; ++i) {
      if (mask & (1 << i)) act.push_back(i);
    }
    if (act.size() > 2) continue;
    const int k = static_cast<int>(act.size());
    Eigen::MatrixXd kkt(2 + k, 2 + k);
    kkt.setZero();
    kkt.topLeftCorner(2, 2) = qp.P;
    Eigen::VectorXd rhs(2 + k);
    rhs.head(2) = -qp.q;
    for (int i = 0; i < k; ++i) {
      kkt.block(0, 2 + i, 2, 1) = rows[act[i]].a.transpose();
      kkt.block(2 + i, 0, 1, 2) = rows[act[i]].a;
      rhs[2 + i] = rows[act[i]].b;
    }
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
    if (!lu.isInvertible()) continue;
    const Eigen::VectorXd sol = lu.solve(rhs);
    const Eigen::Vector2d x = sol.head(2);
    bool ok = true;
    for (int i = 0; i < m; ++i) {
      if (rows[i].a.dot(x) < rows[i].b - 1e-9) ok = false;
    }
    const double f = 0.5 * x.dot(qp.P * x) + qp.q.dot(x);
    if (ok && f < best - 1e-12) {
      best = f;
      best_x = x;
    }
  }
  return best_x;
}

}  // namespace

TEST_CASE("QP subproblem solves hand-checked hard-row problems") {
  BoxQp qp;
  qp.P = Eigen::MatrixXd::Identity(2, 2);
  qp.q = Eigen::Vector2d(-1.0, -2.0);
  qp.A.resize(3, 2);
  qp.A << 1, 1, 1, 0, 0, 1;  // x1 + x2 >= 1, x >= 0
  qp.lower = Eigen::Vector3d(1.0, 0.0, 0.0);
  qp.upper = Eigen::Vector3d::Constant(kInf);
  qp.penalty = Eigen::Vector3d::Constant(kInf);
  const QpResult res = solve_box_qp(qp, Eigen::VectorXd(), Eigen::VectorXd(), QpOptions{});
  CHECK(res.converged);
  // Unconstrained minimizer (1, 2) already satisfies everything.
  CHECK(res.x[0] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(res.x[1] == doctest::Approx(2.0).epsilon(1e-8));

  qp.q = Eigen::Vector2d(0.5, 0.5);  // now the sum row is active
  const QpResult res2 = solve_box_qp(qp, Eigen::VectorXd(), Eigen::VectorXd(), QpOptions{});
  CHECK(res2.converged);
  CHECK(res2.x[0] + res2.x[1] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(res2.x[0] == doctest::Approx(0.5).epsilon(1e-8));  // symmetric split
}

TEST_CASE("QP soft rows trade penalty against curvature at the kink") {
  BoxQp qp;
  qp.P = Eigen::MatrixXd::Identity(1, 1);
  qp.q = Eigen::VectorXd::Zero(1);
  qp.A = Eigen::MatrixXd::Identity(1, 1);
  qp.lower = Eigen::VectorXd::Constant(1, -kInf);
  qp.upper = Eigen::VectorXd::Constant(1, -1.0);  // violated at x = 0
  SUBCASE("weak penalty moves only partway toward feasibility") {
    qp.penalty = Eigen::VectorXd::Constant(1, 0.1);
    const QpResult res = solve_box_qp(qp, Eigen::VectorXd(), Eigen::VectorXd(), QpOptions{});
    // min 0.5 x^2 + 0.1 max(x + 1, 0): stationary at x = -0.1.
    CHECK(res.x[0] == doctest::Approx(-0.1).epsilon(1e-8));
  }
  SUBCASE("strong penalty stops exactly at the feasibility kink") {
    qp.penalty = Eigen::VectorXd::Constant(1, 10.0);
    const QpResult res = solve_box_qp(qp, Eigen::VectorXd(), Eigen::VectorXd(), QpOptions{});
    CHECK(res.x[0] == doctest::Approx(-1.0).epsilon(1e-8));
  }
}

TEST_CASE("QP matches an active-set enumeration oracle on random problems") {
  std::mt19937 rng(5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> ub(0.2, 1.5);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::MatrixXd l(2, 2);
    for (int i = 0; i < 4; ++i) l.data()[i] = gauss(rng);
    BoxQp qp;
    qp.P = l * l.transpose() + 0.2 * Eigen::MatrixXd::Identity(2, 2);
    qp.q = Eigen::Vector2d(gauss(rng), gauss(rng));
    qp.A.resize(3, 2);
    for (int i = 0; i < 6; ++i) qp.A.data()[i] = gauss(rng);
    qp.lower = Eigen::Vector3d(-ub(rng), -ub(rng), -ub(rng));
    qp.upper = Eigen::Vector3d(ub(rng), ub(rng), ub(rng));
    qp.penalty = Eigen::Vector3d::Constant(kInf);
    const QpResult res = solve_box_qp(qp, Eigen::VectorXd(), Eigen::VectorXd(), QpOptions{});
    if (!res.converged) continue;  // boxes around zero: always feasible, but be safe
    ++checked;
    CHECK(res.primal_residual < 1e-7);
    const Eigen::Vector2d want = oracle_qp2(qp);
    const double f_got = 0.5 * res.x.dot(qp.P * res.x) + qp.q.dot(res.x);
    const double f_want = 0.5 * want.dot(qp.P * want) + qp.q.dot(want);
    CHECK(f_got <= f_want + 1e-7);
    CHECK((res.x - want).norm() < 1e-6);
  }
  CHECK(checked >= 195);
}

TEST_CASE("unconstrained quadratic converges to the analytic minimizer") {
  Eigen::MatrixXd p(2, 2);
  p << 4.0, 1.0, 1.0, 3.0;
  const Eigen::Vector2d q(1.0, -2.0);
  const NlpProblem prob = unconstrained_quadratic(p, q);
  const Eigen::Vector2d want = p.ldlt().solve(-q);
  SolverOptions opts;
  const SolveResult res = solve(prob, Eigen::Vector2d(5.0, -7.0), opts);
  CHECK(res.status == SolveStatus::kOptimal);
  CHECK((res.solution - want).norm() < 1e-5);
  CHECK(res.max_violation == doctest::Approx(0.0));
}

TEST_CASE("constrained analytic problem: projection onto a half-space") {
  // minimize ||x - (2, 2)||^2  s.t.  x1 + x2 <= 2  ->  x* = (1, 1).
  NlpProblem prob;
  prob.num_vars = 2;
  prob.var_lower = Eigen::VectorXd::Constant(2, -kInf);
  prob.var_upper = Eigen::VectorXd::Constant(2, kInf);
  prob.cons_lower = Eigen::VectorXd::Constant(1, -kInf);
  prob.cons_upper = Eigen::VectorXd::Constant(1, 2.0);
  prob.objective = [](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    const Eigen::Vector2d c(2.0, 2.0);
    if (grad != nullptr) *grad = 2.0 * (x - c);
    return (x - c).squaredNorm();
  };
  prob.constraints = [](const Eigen::VectorXd& x, Eigen::VectorXd& values,
                        Eigen::MatrixXd* jac) {
    values = Eigen::VectorXd::Constant(1, x.sum());
    if (jac != nullptr) *jac = Eigen::MatrixXd::Ones(1, 2);
  };
  const SolveResult res = solve(prob, Eigen::Vector2d::Zero(), SolverOptions{});
  CHECK(res.status == SolveStatus::kOptimal);
  CHECK((res.solution - Eigen::Vector2d(1.0, 1.0)).norm() < 1e-5);
  CHECK(res.max_violation < 1e-6);
}

TEST_CASE("nonconvex constrained problem with curvature callback") {
  // minimize x1 + x2  s.t.  x1^2 + x2^2 = 1 (as a two-sided row):
  // x* = (-1/sqrt(2), -1/sqrt(2)).
  NlpProblem prob;
  prob.num_vars = 2;
  prob.var_lower = Eigen::VectorXd::Constant(2, -2.0);
  prob.var_upper = Eigen::VectorXd::Constant(2, 2.0);
  prob.cons_lower = Eigen::VectorXd::Constant(1, 1.0);
  prob.cons_upper = Eigen::VectorXd::Constant(1, 1.0);
  prob.objective = [](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    if (grad != nullptr) *grad = Eigen::Vector2d::Ones();
    return x.sum();
  };
  prob.constraints = [](const Eigen::VectorXd& x, Eigen::VectorXd& values,
                        Eigen::MatrixXd* jac) {
    values = Eigen::VectorXd::Constant(1, x.squaredNorm());
    if (jac != nullptr) *jac = 2.0 * x.transpose();
  };
  prob.hessian = [](const Eigen::VectorXd&, Eigen::MatrixXd& h) {
    h = Eigen::MatrixXd::Identity(2, 2);
  };
  SolverOptions opts;
  opts.acceptable_df = 1e-8;  // run to the KKT point, not the early MPC exit
  const SolveResult res = solve(prob, Eigen::Vector2d(0.5, -1.2), opts);
  const double s = 1.0 / std::sqrt(2.0);
  CHECK(res.max_violation < 1e-6);
  CHECK((res.solution - Eigen::Vector2d(-s, -s)).norm() < 1e-4);
}

TEST_CASE("active variable bounds are honored") {
  // minimize (x - 3)^2 with x <= 1  ->  x* = 1.
  NlpProblem prob;
  prob.num_vars = 1;
  prob.var_lower = Eigen::VectorXd::Constant(1, -kInf);
  prob.var_upper = Eigen::VectorXd::Constant(1, 1.0);
  prob.cons_lower.resize(0);
  prob.cons_upper.resize(0);
  prob.objective = [](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    if (grad != nullptr) (*grad) = 2.0 * (x.array() - 3.0).matrix();
    return (x[0] - 3.0) * (x[0] - 3.0);
  };
  prob.constraints = [](const Eigen::VectorXd&, Eigen::VectorXd& values,
                        Eigen::MatrixXd* jac) {
    values.resize(0);
    if (jac != nullptr) jac->resize(0, 1);
  };
  const SolveResult res = solve(prob, Eigen::VectorXd::Zero(1), SolverOptions{});
  CHECK(res.solution[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(res.solution[0] <= 1.0 + 1e-10);
}

TEST_CASE("infeasible constraints are reported, not hidden") {
  // x <= -1 and x >= 1 cannot both hold.
  NlpProblem prob;
  prob.num_vars = 1;
  prob.var_lower = Eigen::VectorXd::Constant(1, -kInf);
  prob.var_upper = Eigen::VectorXd::Constant(1, kInf);
  prob.cons_lower.resize(2);
  prob.cons_upper.resize(2);
  prob.cons_lower << -kInf, 1.0;
  prob.cons_upper << -1.0, kInf;
  prob.objective = [](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    if (grad != nullptr) *grad = 2.0 * x;
    return x.squaredNorm();
  };
  prob.constraints = [](const Eigen::VectorXd& x, Eigen::VectorXd& values,
                        Eigen::MatrixXd* jac) {
    values = Eigen::VectorXd::Constant(2, x[0]);
    if (jac != nullptr) *jac = Eigen::MatrixXd::Ones(2, 1);
  };
  SolverOptions opts;
  opts.max_iter = 60;
  const SolveResult res = solve(prob, Eigen::VectorXd::Zero(1), opts);
  CHECK(res.status != SolveStatus::kOptimal);
  CHECK(res.max_violation > 0.5);
}

TEST_CASE("solver is deterministic") {
  Eigen::MatrixXd p(3, 3);
  p << 5, 1, 0, 1, 4, 1, 0, 1, 3;
  const Eigen::Vector3d q(0.3, -1.0, 2.0);
  const NlpProblem prob = unconstrained_quadratic(p, q);
  const Eigen::Vector3d x0(1.0, 2.0, 3.0);
  const SolveResult a = solve(prob, x0, SolverOptions{});
  const SolveResult b = solve(prob, x0, SolverOptions{});
  CHECK(a.iterations == b.iterations);
  CHECK((a.solution - b.solution).norm() == 0.0);
  CHECK(a.objective == b.objective);
}

TEST_CASE("warm start shift follows same-mode children") {
  const TreeTopology t = TreeTopology::build(4, 2, 3, 2);  // branch at 0, 2
  const int n = 2 * t.num_nonleaf();
  Eigen::VectorXd prev(n);
  for (int i = 0; i < n; ++i) prev[i] = i;
  const Eigen::VectorXd shifted = warm_start_shift(prev, t);
  REQUIRE(shifted.size() == n);
  // Each non-leaf node inherits the previous controls of the child continuing
  // its incoming mode (first child when no match); the final control stage
  // duplicates its own previous inputs.
  for (int id = 0; id < t.num_nonleaf(); ++id) {
    int expect = id;
    if (t.nodes[id].stage < t.horizon - 1) {
      expect = t.nodes[id].children.front();
      for (const int c : t.nodes[id].children) {
        if (t.nodes[c].mode == t.nodes[id].mode) {
          expect = c;
          break;
        }
      }
    }
    CHECK(shifted[2 * id] == doctest::Approx(prev[2 * expect]));
    CHECK(shifted[2 * id + 1] == doctest::Approx(prev[2 * expect + 1]));
  }
  // Dimension mismatch falls back to zero.
  const Eigen::VectorXd bad = warm_start_shift(Eigen::VectorXd::Ones(3), t);
  CHECK(bad.norm() == doctest::Approx(0.0));
  REQUIRE(bad.size() == n);
}
