#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include <nlohmann/json.hpp>

#include "lcmpc/scenario_tree.hpp"

using namespace lcmpc;

namespace {

JointState random_joint(std::mt19937& rng) {
  std::uniform_real_distribution<double> un(-1.0, 1.0);
  JointState j;
  j.ego = {6 + 5 * un(rng), 2 * un(rng), 23 + 2 * un(rng), 0.3 * un(rng)};
  j.target = {5 * un(rng), 4.0, 23 + 2 * un(rng), 0.05 * un(rng)};
  return j;
}

IntentModel random_model(std::mt19937& rng) {
  IntentModel m = IntentModel::zero(FeatureMap{});
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < m.theta.size(); ++i) m.theta.data()[i] = gauss(rng);
  return m;
}

}  // namespace

TEST_CASE("reference topology 20/2/11/5") {
  const TreeTopology t = TreeTopology::build(20, 2, 11, 5);
  CHECK(t.num_nodes() == 111);
  CHECK(t.num_nonleaf() == 103);
  CHECK(t.num_scenarios() == 8);
  // Branching stages are exactly 0, 5, 10.
  for (int k = 0; k <= 20; ++k) {
    CHECK(t.is_branching_stage(k) == (k == 0 || k == 5 || k == 10));
  }
  // Root.
  CHECK(t.nodes[0].stage == 0);
  CHECK(t.nodes[0].ancestor == -1);
  CHECK(t.nodes[0].mode == -1);
  CHECK(t.nodes[0].children.size() == 2);
  // Leaves all at the final stage, each path has horizon edges.
  for (const int leaf : t.leaves) {
    CHECK(t.nodes[leaf].stage == 20);
    CHECK(t.nodes[leaf].children.empty());
    const auto modes = t.path_modes(leaf);
    CHECK(static_cast<int>(modes.size()) == 20);
    // Mode is constant within each timescale block after the last branch.
    for (size_t i = 0; i < modes.size(); ++i) {
      const int stage_edge = static_cast<int>(i);  // edge into stage i+1 starts at stage i
      if (!t.is_branching_stage(stage_edge)) {
        CHECK(modes[i] == modes[i - 1]);
      }
    }
  }
  // The 8 scenarios enumerate all mode words over the 3 branching stages.
  std::set<std::vector<int>> words;
  for (const int leaf : t.leaves) {
    const auto modes = t.path_modes(leaf);
    words.insert({modes[0], modes[5], modes[10]});
  }
  CHECK(words.size() == 8);
  // Parent/child consistency.
  for (int i = 0; i < t.num_nodes(); ++i) {
    for (const int c : t.nodes[i].children) {
      CHECK(t.nodes[c].ancestor == i);
      CHECK(t.nodes[c].stage == t.nodes[i].stage + 1);
    }
    if (i < t.num_nonleaf()) {
      CHECK(!t.nodes[i].children.empty());
    }
  }
}

TEST_CASE("node and leaf counts for random topologies") {
  std::mt19937 rng(4);
  std::uniform_int_distribution<int> uh(1, 12), um(2, 3), ud(1, 4);
  for (int trial = 0; trial < 50; ++trial) {
    const int horizon = uh(rng);
    const int modes = um(rng);
    const int branch = std::uniform_int_distribution<int>(1, horizon)(rng);
    const int timescale = ud(rng);
    const TreeTopology t = TreeTopology::build(horizon, modes, branch, timescale);
    // Oracle: count stage by stage.
    int per_stage = 1, total = 1;
    for (int k = 0; k < horizon; ++k) {
      if (k < branch && k % timescale == 0) per_stage *= modes;
      total += per_stage;
    }
    CHECK(t.num_nodes() == total);
    CHECK(t.num_scenarios() == per_stage);
    CHECK(t.num_nonleaf() == total - per_stage);
  }
}

TEST_CASE("rollout advances ego with ancestor controls and target with edge modes") {
  const TreeTopology t = TreeTopology::build(4, 2, 3, 2);  // branch at 0, 2
  std::mt19937 rng(8);
  const JointState root = random_joint(rng);
  Eigen::VectorXd controls = Eigen::VectorXd::Random(2 * t.num_nonleaf()) * 0.5;
  TargetParams params;
  VehicleGeometry geom;
  const double dt = 0.1;
  const TreeTrajectories traj = rollout(t, root, controls, params, geom, dt);
  REQUIRE(static_cast<int>(traj.states.size()) == t.num_nodes());
  CHECK((traj.states[0].vec() - root.vec()).norm() == doctest::Approx(0.0));
  for (int i = 1; i < t.num_nodes(); ++i) {
    const TreeNode& node = t.nodes[i];
    const JointState& prev = traj.states[node.ancestor];
    const ControlInput u{controls[2 * node.ancestor], controls[2 * node.ancestor + 1]};
    const VehicleState ego = step(prev.ego, u, geom, dt);
    const VehicleState tv =
        target_step(prev, static_cast<Maneuver>(node.mode), params, geom, dt);
    CHECK((traj.states[i].ego.vec() - ego.vec()).norm() < 1e-14);
    CHECK((traj.states[i].target.vec() - tv.vec()).norm() < 1e-14);
  }
}

TEST_CASE("path probabilities sum to one for the logistic model") {
  std::mt19937 rng(15);
  std::uniform_int_distribution<int> uh(1, 8), ud(1, 3);
  for (int trial = 0; trial < 1000; ++trial) {
    const int horizon = uh(rng);
    const int modes = 2;  // rollout needs real maneuvers on the edges
    const int branch = std::uniform_int_distribution<int>(1, horizon)(rng);
    const TreeTopology t = TreeTopology::build(horizon, modes, branch, ud(rng));
    IntentModel model = IntentModel::zero(FeatureMap{});
    model.theta = Eigen::MatrixXd::Zero(5, modes);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < model.theta.size(); ++i) model.theta.data()[i] = gauss(rng);
    const JointState root = random_joint(rng);
    Eigen::VectorXd controls = Eigen::VectorXd::Random(2 * t.num_nonleaf());
    const TreeTrajectories traj =
        rollout(t, root, controls, TargetParams{}, VehicleGeometry{}, 0.1);
    const Eigen::VectorXd p = path_probabilities(traj, t, model);
    REQUIRE(p.size() == t.num_scenarios());
    CHECK(p.minCoeff() >= 0.0);
    CHECK(std::abs(p.sum() - 1.0) < 1e-10);
  }
}

TEST_CASE("fixed distributions give products of edge probabilities") {
  const TreeTopology t = TreeTopology::build(6, 2, 6, 3);  // branch at 0, 3
  Eigen::VectorXd probs(2);
  probs << 0.3, 0.7;
  const ModeDistribution dist = ModeDistribution::fixed(probs);
  CHECK(!dist.is_state_dependent());
  std::mt19937 rng(19);
  const JointState root = random_joint(rng);
  Eigen::VectorXd controls = Eigen::VectorXd::Zero(2 * t.num_nonleaf());
  const TreeTrajectories traj =
      rollout(t, root, controls, TargetParams{}, VehicleGeometry{}, 0.1);
  const Eigen::VectorXd p = path_probabilities(traj, t, dist);
  REQUIRE(p.size() == 4);
  for (int s = 0; s < 4; ++s) {
    const auto modes = t.path_modes(t.leaves[s]);
    const double want = probs[modes[0]] * probs[modes[3]];
    CHECK(p[s] == doctest::Approx(want).epsilon(1e-12));
  }
  CHECK(dist.state_jacobian(root).norm() == doctest::Approx(0.0));
}

TEST_CASE("logistic distribution matches the intent model pointwise") {
  std::mt19937 rng(23);
  const IntentModel model = random_model(rng);
  const ModeDistribution dist = ModeDistribution::logistic(model);
  CHECK(dist.is_state_dependent());
  CHECK(dist.num_modes() == 2);
  for (int i = 0; i < 20; ++i) {
    const JointState j = random_joint(rng);
    CHECK((dist.probs(j) - model.predict(j)).norm() < 1e-14);
    CHECK((dist.state_jacobian(j) - model.predict_state_jacobian(j)).norm() < 1e-12);
  }
}

TEST_CASE("JSON dump is well formed and consistent") {
  const TreeTopology t = TreeTopology::build(4, 2, 3, 2);
  std::mt19937 rng(31);
  const JointState root = random_joint(rng);
  Eigen::VectorXd controls = Eigen::VectorXd::Zero(2 * t.num_nonleaf());
  const TreeTrajectories traj =
      rollout(t, root, controls, TargetParams{}, VehicleGeometry{}, 0.1);
  const Eigen::VectorXd p =
      path_probabilities(traj, t, ModeDistribution::fixed(Eigen::Vector2d(0.5, 0.5)));
  const std::string text = dump_tree_json(t, &traj, &p);
  const nlohmann::json doc = nlohmann::json::parse(text);
  CHECK(doc["nodes"].size() == static_cast<size_t>(t.num_nodes()));
  CHECK(doc["leaf_probabilities"].size() == static_cast<size_t>(t.num_scenarios()));
}
