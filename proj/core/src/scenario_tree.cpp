#include "lcmpc/scenario_tree.hpp"

#include <algorithm>
#include <stdexcept>

#include <json.hpp>

namespace lcmpc {

TreeTopology TreeTopology::build(int horizon, int num_modes, int branch_horizon,
                                 int timescale) {
  if (horizon < 1 || num_modes < 1 || branch_horizon < 1 || branch_horizon > horizon ||
      timescale < 1) {
    throw std::invalid_argument("TreeTopology::build: invalid parameters");
  }
  TreeTopology topo;
  topo.horizon = horizon;
  topo.num_modes = num_modes;
  topo.branch_horizon = branch_horizon;
  topo.timescale = timescale;

  topo.nodes.push_back(TreeNode{0, -1, -1, {}});
  std::vector<int> frontier{0};
  for (int k = 0; k < horizon; ++k) {
    const bool branching = topo.is_branching_stage(k);
    std::vector<int> next;
    for (const int parent : frontier) {
      const int n_children = branching ? num_modes : 1;
      for (int m = 0; m < n_children; ++m) {
        const int mode = branching ? m : topo.nodes[parent].mode;
        const int id = static_cast<int>(topo.nodes.size());
        topo.nodes.push_back(TreeNode{k + 1, parent, mode, {}});
        topo.nodes[parent].children.push_back(id);
        next.push_back(id);
      }
    }
    frontier = std::move(next);
  }
  topo.leaves = frontier;
  return topo;
}

std::vector<int> TreeTopology::path_modes(int node) const {
  std::vector<int> modes;
  for (int cur = node; cur != 0; cur = nodes[cur].ancestor) {
    modes.push_back(nodes[cur].mode);
  }
  std::reverse(modes.begin(), modes.end());
  return modes;
}

ModeDistribution ModeDistribution::logistic(IntentModel model) {
  ModeDistribution d;
  d.state_dependent_ = true;
  d.model_ = std::move(model);
  return d;
}

ModeDistribution ModeDistribution::fixed(Eigen::VectorXd probs) {
  if (probs.size() < 1 || probs.minCoeff() < 0.0 ||
      std::abs(probs.sum() - 1.0) > 1e-9) {
    throw std::invalid_argument("ModeDistribution::fixed: not a probability vector");
  }
  ModeDistribution d;
  d.state_dependent_ = false;
  d.fixed_probs_ = std::move(probs);
  return d;
}

int ModeDistribution::num_modes() const {
  return state_dependent_ ? model_.num_modes() : static_cast<int>(fixed_probs_.size());
}

Eigen::VectorXd ModeDistribution::probs(const JointState& joint) const {
  return state_dependent_ ? model_.predict(joint) : fixed_probs_;
}

Eigen::MatrixXd ModeDistribution::state_jacobian(const JointState& joint) const {
  if (state_dependent_) {
    return model_.predict_state_jacobian(joint);
  }
  return Eigen::MatrixXd::Zero(num_modes(), 8);
}

TreeTrajectories rollout(const TreeTopology& topology, const JointState& root_state,
                         const Eigen::VectorXd& controls, const TargetParams& target_params,
                         const VehicleGeometry& geom, double dt) {
  if (controls.size() != 2 * topology.num_nonleaf()) {
    throw std::invalid_argument("rollout: control vector size mismatch");
  }
  TreeTrajectories traj;
  traj.states.resize(topology.num_nodes());
  traj.states[0] = root_state;
  for (int id = 1; id < topology.num_nodes(); ++id) {
    const TreeNode& node = topology.nodes[id];
    const JointState& parent = traj.states[node.ancestor];
    const ControlInput u{controls[2 * node.ancestor], controls[2 * node.ancestor + 1]};
    JointState next;
    next.ego = step(parent.ego, u, geom, dt);
    next.target =
        target_step(parent, static_cast<Maneuver>(node.mode), target_params, geom, dt);
    traj.states[id] = next;
  }
  return traj;
}

Eigen::VectorXd path_probabilities(const TreeTrajectories& trajectories,
                                   const TreeTopology& topology,
                                   const ModeDistribution& distribution) {
  // Node probabilities accumulate down the tree; leaves carry the scenario
  // probabilities.
  std::vector<double> node_prob(topology.num_nodes(), 1.0);
  for (int id = 0; id < topology.num_nodes(); ++id) {
    const TreeNode& node = topology.nodes[id];
    if (node.children.size() <= 1) {
      for (const int child : node.children) {
        node_prob[child] = node_prob[id];
      }
      continue;
    }
    const Eigen::VectorXd p = distribution.probs(trajectories.states[id]);
    for (const int child : node.children) {
      node_prob[child] = node_prob[id] * p[topology.nodes[child].mode];
    }
  }
  Eigen::VectorXd leaf_probs(topology.num_scenarios());
  for (int s = 0; s < topology.num_scenarios(); ++s) {
    leaf_probs[s] = node_prob[topology.leaves[s]];
  }
  return leaf_probs;
}

Eigen::VectorXd path_probabilities(const TreeTrajectories& trajectories,
                                   const TreeTopology& topology, const IntentModel& model) {
  return path_probabilities(trajectories, topology, ModeDistribution::logistic(model));
}

std::string dump_tree_json(const TreeTopology& topology, const TreeTrajectories* trajectories,
                           const Eigen::VectorXd* leaf_probabilities) {
  nlohmann::json j;
  j["horizon"] = topology.horizon;
  j["num_modes"] = topology.num_modes;
  j["branch_horizon"] = topology.branch_horizon;
  j["timescale"] = topology.timescale;
  j["num_scenarios"] = topology.num_scenarios();
  nlohmann::json nodes = nlohmann::json::array();
  for (int id = 0; id < topology.num_nodes(); ++id) {
    const TreeNode& node = topology.nodes[id];
    nlohmann::json nj;
    nj["id"] = id;
    nj["stage"] = node.stage;
    nj["ancestor"] = node.ancestor;
    nj["mode"] = node.mode;
    nj["children"] = node.children;
    if (trajectories != nullptr) {
      const JointState& z = trajectories->states[id];
      nj["ego"] = {z.ego.px, z.ego.py, z.ego.v, z.ego.psi};
      nj["target"] = {z.target.px, z.target.py, z.target.v, z.target.psi};
    }
    nodes.push_back(nj);
  }
  j["nodes"] = nodes;
  if (leaf_probabilities != nullptr) {
    std::vector<double> probs(leaf_probabilities->data(),
                              leaf_probabilities->data() + leaf_probabilities->size());
    j["leaf_probabilities"] = probs;
  }
  return j.dump(2);
}

}  // namespace lcmpc
