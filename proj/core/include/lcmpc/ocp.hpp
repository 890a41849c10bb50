#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "lcmpc/behavior.hpp"
#include "lcmpc/dynamics.hpp"
#include "lcmpc/nlp_problem.hpp"
#include "lcmpc/risk.hpp"
#include "lcmpc/scenario_tree.hpp"

namespace lcmpc {

/// Quadratic stage cost ||z_ego - z_ref||_Q^2 + ||u||_R^2 with diagonal
/// weights; the terminal cost drops the input term.
struct CostWeights {
  Eigen::Vector4d q{0.0, 1.0, 0.01, 16.0 / (M_PI * M_PI)};
  Eigen::Vector2d r{0.01, 16.0 / (M_PI * M_PI)};
  VehicleState z_ref{0.0, 4.0, 28.0, 0.0};
};

double stage_cost(const JointState& joint, const ControlInput& input, const CostWeights& w);
double terminal_cost(const JointState& joint, const CostWeights& w);

/// Three-circle footprint approximation of the vehicle box.
struct CollisionGeometry {
  int num_circles{3};
  double radius{1.3};
  double length{5.0};
  double width{2.0};
};

/// Smallest circle radius covering the l x w box with n equally spaced
/// circles: r = 0.5 * sqrt((l/n)^2 + w^2).
double min_radius(double length, double width, int num_circles);

/// Circle centers spread along the heading axis.
std::vector<Eigen::Vector2d> circle_centers(const VehicleState& state,
                                            const CollisionGeometry& geom);

/// All pairwise margins g_ij = 4 r^2 - ||c_i(ego) - c_j(target)||^2, row-major
/// over (i, j). g_ij <= 0 for all pairs is sufficient for collision avoidance.
Eigen::VectorXd collision_margin(const JointState& joint, const CollisionGeometry& geom);

/// d g_ij / d zbar (num_circles^2 x 8).
Eigen::MatrixXd collision_margin_jacobian(const JointState& joint,
                                          const CollisionGeometry& geom);

struct OcpConfig {
  double gamma{0.05};
  SigmoidParams sigmoid{1.2, 10.0, 0.0};  // shift set via calibrate_shift
  Eigen::Vector2d du_max{5.0, M_PI / 4.0};
  double y_min{-1.0}, y_max{5.0};
  double v_min{0.0}, v_max{28.0};
  double psi_min{-M_PI / 4.0}, psi_max{M_PI / 4.0};
  double a_min{-5.0}, a_max{5.0};
  double steer_min{-M_PI / 4.0}, steer_max{M_PI / 4.0};
  double dt{0.1};
};

/// Everything the tree OCP callbacks need, bundled once.
struct OcpData {
  TreeTopology topology;
  JointState root_state;
  ControlInput prev_input;
  ModeDistribution distribution;
  OcpConfig config;
  CostWeights weights;
  CollisionGeometry collision;
  TargetParams target_params;
  VehicleGeometry geom;
};

/// Row layout of the assembled constraint vector, in order: chance rows (one
/// per multi-child node), hard collision rows (num_circles^2 per single-child
/// edge), ego state-bound rows (y, v, psi per non-root node), slew rows
/// (root vs prev_input, then one pair per tree edge between controls).
struct ConstraintLayout {
  std::vector<int> multi_child_nodes;
  std::vector<int> single_child_children;
  int chance_begin{0};
  int hard_begin{0};
  int bounds_begin{0};
  int slew_begin{0};
  int total{0};

  static ConstraintLayout from_topology(const TreeTopology& topology);
};

/// Expected tree cost sum_s pi_s(u) (l_N + sum_path l); the gradient carries
/// the full chain rule through the decision-dependent probabilities.
double tree_objective(const Eigen::VectorXd& controls, const OcpData& data,
                      Eigen::VectorXd* grad);

/// Collision constraint families: the smoothed chance rows for multi-child
/// nodes and the hard margin rows for single-child edges, stacked in layout
/// order. Jacobian is computed when non-null.
void chance_constraints(const Eigen::VectorXd& controls, const OcpData& data,
                        Eigen::VectorXd& values, Eigen::MatrixXd* jacobian);

/// Assembles the scenario-tree OCP as a smooth NLP over the flat control
/// vector (states eliminated by forward substitution).
NlpProblem assemble(const OcpData& data);

}  // namespace lcmpc
