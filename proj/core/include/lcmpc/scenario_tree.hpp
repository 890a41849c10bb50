#pragma once

#include <string>
#include <vector>

#include "lcmpc/behavior.hpp"
#include "lcmpc/dynamics.hpp"
#include "lcmpc/intent.hpp"

namespace lcmpc {

struct TreeNode {
  int stage{0};
  int ancestor{-1};           // -1 for the root
  int mode{-1};               // mode on the incoming edge; -1 for the root
  std::vector<int> children;  // indices into TreeTopology::nodes
};

/// Staged scenario tree. Branching occurs at stages k with k % timescale == 0
/// and k < branch_horizon; everywhere else each node has a single child that
/// inherits the ancestor's incoming mode. Nodes are indexed stage-major with
/// children ordered by (ancestor, mode), so rebuilding a topology with the
/// same parameters yields identical indices. Non-leaf nodes occupy indices
/// 0..num_nonleaf()-1.
struct TreeTopology {
  int horizon{0};
  int num_modes{0};
  int branch_horizon{0};
  int timescale{1};
  std::vector<TreeNode> nodes;
  std::vector<int> leaves;

  static TreeTopology build(int horizon, int num_modes, int branch_horizon, int timescale);

  bool is_branching_stage(int stage) const {
    return stage < branch_horizon && stage % timescale == 0;
  }
  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int num_nonleaf() const { return num_nodes() - static_cast<int>(leaves.size()); }
  int num_scenarios() const { return static_cast<int>(leaves.size()); }
  /// Incoming-mode sequence along the path from the root to node (excluding
  /// the root).
  std::vector<int> path_modes(int node) const;
};

/// Per-node joint states filled by rollout().
struct TreeTrajectories {
  std::vector<JointState> states;
};

/// Distribution over maneuvers used on the tree: either the state-dependent
/// logistic model or a fixed probability vector (state-independent).
class ModeDistribution {
 public:
  static ModeDistribution logistic(IntentModel model);
  static ModeDistribution fixed(Eigen::VectorXd probs);

  int num_modes() const;
  Eigen::VectorXd probs(const JointState& joint) const;
  /// d probs / d zbar (num_modes x 8); zero for fixed distributions.
  Eigen::MatrixXd state_jacobian(const JointState& joint) const;
  bool is_state_dependent() const { return state_dependent_; }

 private:
  ModeDistribution() = default;
  bool state_dependent_{false};
  IntentModel model_;
  Eigen::VectorXd fixed_probs_;
};

/// Fills every node state: the ego advances with the ancestor's control, the
/// target advances under the incoming-edge mode. controls is the flat
/// decision vector (2 entries per non-leaf node, in node order).
TreeTrajectories rollout(const TreeTopology& topology, const JointState& root_state,
                         const Eigen::VectorXd& controls, const TargetParams& target_params,
                         const VehicleGeometry& geom, double dt);

/// Per-leaf scenario probabilities: the product over branching edges of the
/// model probability of the edge mode evaluated at the ancestor state.
/// Non-branching edges contribute factor 1.
Eigen::VectorXd path_probabilities(const TreeTrajectories& trajectories,
                                   const TreeTopology& topology,
                                   const ModeDistribution& distribution);

Eigen::VectorXd path_probabilities(const TreeTrajectories& trajectories,
                                   const TreeTopology& topology, const IntentModel& model);

/// Debug dump (stages, edges, modes, states, probabilities) as a JSON string.
std::string dump_tree_json(const TreeTopology& topology, const TreeTrajectories* trajectories,
                           const Eigen::VectorXd* leaf_probabilities);

}  // namespace lcmpc
