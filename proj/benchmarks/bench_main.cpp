#include <random>

#include <benchmark/benchmark.h>

#include "lcmpc/config.hpp"
#include "lcmpc/nlp_solver.hpp"
#include "lcmpc/qp.hpp"
#include "lcmpc/ocp.hpp"
#include "lcmpc/simulate.hpp"

namespace {

using namespace lcmpc;

OcpData reference_data() {
  const ExperimentConfig config = ExperimentConfig::defaults();
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  IntentModel model = IntentModel::zero(config.features);
  for (int i = 0; i < model.theta.size(); ++i) model.theta.data()[i] = u(rng);
  const JointState root{{6.0, 0.0, 24.0, 0.0}, {3.0, 4.0, 24.0, 0.0}};
  return OcpData{TreeTopology::build(config.horizon, config.num_modes,
                                     config.branch_horizon, config.timescale),
                 root,
                 {0.0, 0.0},
                 ModeDistribution::logistic(model),
                 config.ocp,
                 config.weights,
                 config.collision,
                 config.nominal_target,
                 config.geometry};
}

void bench_tree_rollout(benchmark::State& state) {
  const OcpData data = reference_data();
  const Eigen::VectorXd controls =
      Eigen::VectorXd::Zero(2 * data.topology.num_nonleaf());
  for (auto _ : state) {
    const TreeTrajectories traj =
        rollout(data.topology, data.root_state, controls, data.target_params,
                data.geom, data.config.dt);
    benchmark::DoNotOptimize(traj.states.back());
  }
}
BENCHMARK(bench_tree_rollout);

void bench_objective_with_gradient(benchmark::State& state) {
  const OcpData data = reference_data();
  const Eigen::VectorXd controls =
      0.1 * Eigen::VectorXd::Ones(2 * data.topology.num_nonleaf());
  Eigen::VectorXd grad;
  for (auto _ : state) {
    const double f = tree_objective(controls, data, &grad);
    benchmark::DoNotOptimize(f);
    benchmark::DoNotOptimize(grad);
  }
}
BENCHMARK(bench_objective_with_gradient);

void bench_constraints_with_jacobian(benchmark::State& state) {
  const OcpData data = reference_data();
  const NlpProblem problem = assemble(data);
  const Eigen::VectorXd controls = 0.1 * Eigen::VectorXd::Ones(problem.num_vars);
  Eigen::VectorXd values;
  Eigen::MatrixXd jac;
  for (auto _ : state) {
    problem.constraints(controls, values, &jac);
    benchmark::DoNotOptimize(values);
    benchmark::DoNotOptimize(jac);
  }
}
BENCHMARK(bench_constraints_with_jacobian);

void bench_qp_subproblem(benchmark::State& state) {
  // Dense QP of the working-set size seen in a typical MPC step.
  const int n = 206, m = 80;
  std::mt19937 rng(3);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd l(n, n);
  for (int i = 0; i < n * n; ++i) l.data()[i] = gauss(rng);
  BoxQp qp;
  qp.P = l * l.transpose() / n + Eigen::MatrixXd::Identity(n, n);
  qp.q.resize(n);
  for (int i = 0; i < n; ++i) qp.q[i] = gauss(rng);
  qp.A.resize(m, n);
  for (int i = 0; i < m * n; ++i) qp.A.data()[i] = gauss(rng);
  qp.lower = Eigen::VectorXd::Constant(m, -0.5);
  qp.upper = Eigen::VectorXd::Constant(m, 0.5);
  qp.penalty = Eigen::VectorXd::Constant(m, 100.0);
  for (auto _ : state) {
    const QpResult res = solve_box_qp(qp, Eigen::VectorXd(), Eigen::VectorXd(), QpOptions{});
    benchmark::DoNotOptimize(res.x);
  }
}
BENCHMARK(bench_qp_subproblem);

void bench_full_mpc_solve(benchmark::State& state) {
  const ExperimentConfig config = ExperimentConfig::defaults();
  const OcpData data = reference_data();
  const NlpProblem problem = assemble(data);
  const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(problem.num_vars);
  for (auto _ : state) {
    const SolveResult res = solve(problem, x0, config.solver);
    benchmark::DoNotOptimize(res.solution);
  }
}
BENCHMARK(bench_full_mpc_solve)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
