#include "lcmpc/ocp.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace lcmpc {

double stage_cost(const JointState& joint, const ControlInput& input, const CostWeights& w) {
  const Eigen::Vector4d dz = joint.ego.vec() - w.z_ref.vec();
  const Eigen::Vector2d u = input.vec();
  return dz.dot(w.q.asDiagonal() * dz) + u.dot(w.r.asDiagonal() * u);
}

double terminal_cost(const JointState& joint, const CostWeights& w) {
  const Eigen::Vector4d dz = joint.ego.vec() - w.z_ref.vec();
  return dz.dot(w.q.asDiagonal() * dz);
}

double min_radius(double length, double width, int num_circles) {
  if (length <= 0.0 || width <= 0.0 || num_circles < 1) {
    throw std::invalid_argument("min_radius: positive arguments required");
  }
  const double seg = length / num_circles;
  return 0.5 * std::sqrt(seg * seg + width * width);
}

std::vector<Eigen::Vector2d> circle_centers(const VehicleState& state,
                                            const CollisionGeometry& geom) {
  const int n = geom.num_circles;
  std::vector<Eigen::Vector2d> centers(n);
  const Eigen::Vector2d heading{std::cos(state.psi), std::sin(state.psi)};
  for (int j = 1; j <= n; ++j) {
    const double offset = geom.length / (2.0 * n) * (2.0 * j - n - 1.0);
    centers[j - 1] = Eigen::Vector2d{state.px, state.py} + offset * heading;
  }
  return centers;
}

Eigen::VectorXd collision_margin(const JointState& joint, const CollisionGeometry& geom) {
  const auto ce = circle_centers(joint.ego, geom);
  const auto ct = circle_centers(joint.target, geom);
  const double r2 = 4.0 * geom.radius * geom.radius;
  const int n = geom.num_circles;
  Eigen::VectorXd g(n * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      g[i * n + j] = r2 - (ce[i] - ct[j]).squaredNorm();
    }
  }
  return g;
}

Eigen::MatrixXd collision_margin_jacobian(const JointState& joint,
                                          const CollisionGeometry& geom) {
  const auto ce = circle_centers(joint.ego, geom);
  const auto ct = circle_centers(joint.target, geom);
  const int n = geom.num_circles;
  const Eigen::Vector2d ego_tangent{-std::sin(joint.ego.psi), std::cos(joint.ego.psi)};
  const Eigen::Vector2d tgt_tangent{-std::sin(joint.target.psi), std::cos(joint.target.psi)};
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n * n, 8);
  for (int i = 0; i < n; ++i) {
    const double oi = geom.length / (2.0 * n) * (2.0 * (i + 1) - n - 1.0);
    for (int j = 0; j < n; ++j) {
      const double oj = geom.length / (2.0 * n) * (2.0 * (j + 1) - n - 1.0);
      const Eigen::Vector2d d = ce[i] - ct[j];
      const int row = i * n + j;
      jac(row, 0) = -2.0 * d.x();
      jac(row, 1) = -2.0 * d.y();
      jac(row, 3) = -2.0 * d.dot(oi * ego_tangent);
      jac(row, 4) = 2.0 * d.x();
      jac(row, 5) = 2.0 * d.y();
      jac(row, 7) = 2.0 * d.dot(oj * tgt_tangent);
    }
  }
  return jac;
}

ConstraintLayout ConstraintLayout::from_topology(const TreeTopology& topology) {
  ConstraintLayout layout;
  for (int id = 0; id < topology.num_nodes(); ++id) {
    const auto& node = topology.nodes[id];
    if (node.children.size() > 1) {
      layout.multi_child_nodes.push_back(id);
    } else if (node.children.size() == 1) {
      layout.single_child_children.push_back(node.children[0]);
    }
  }
  const int n_pairs = 9;  // num_circles^2, fixed below via collision geometry
  layout.chance_begin = 0;
  layout.hard_begin = static_cast<int>(layout.multi_child_nodes.size());
  layout.bounds_begin =
      layout.hard_begin + n_pairs * static_cast<int>(layout.single_child_children.size());
  layout.slew_begin = layout.bounds_begin + 3 * (topology.num_nodes() - 1);
  layout.total = layout.slew_begin + 2 * topology.num_nonleaf();
  return layout;
}

namespace {

/// Shared evaluation engine: rolls the tree out once per decision vector,
/// optionally with forward sensitivities, and serves both the objective and
/// the constraint callbacks.
class TreeOcpEvaluator {
 public:
  explicit TreeOcpEvaluator(const OcpData& data)
      : d_(data), layout_(ConstraintLayout::from_topology(data.topology)) {
    if (d_.collision.num_circles != 3) {
      // Layout assumes 9 margin rows per edge.
      throw std::invalid_argument("TreeOcpEvaluator: num_circles must be 3");
    }
    nu_ = 2 * d_.topology.num_nonleaf();
  }

  const ConstraintLayout& layout() const { return layout_; }
  int num_vars() const { return nu_; }

  void ensure(const Eigen::VectorXd& u, bool with_derivatives) {
    if (cached_ && u.size() == last_u_.size() && u == last_u_ &&
        (!with_derivatives || has_derivatives_)) {
      return;
    }
    compute(u, with_derivatives);
  }

  /// Gauss-Newton curvature of the expected tracking cost: state terms map
  /// through the forward sensitivities, control weights hit the diagonal, and
  /// the probability-gradient cross terms are dropped (they are indefinite and
  /// small at the weights used here). The result is positive definite because
  /// every control appears with its own weight.
  void gauss_newton(const Eigen::VectorXd& u, Eigen::MatrixXd& h) {
    ensure(u, true);
    h.setZero(nu_, nu_);
    const Eigen::Vector4d q2 = 2.0 * d_.weights.q;
    const int n_nodes = d_.topology.num_nodes();
    for (int id = 0; id < n_nodes; ++id) {
      const auto s = sens_[id].topRows<4>();
      h.noalias() += node_prob_[id] * s.transpose() * q2.asDiagonal() * s;
      if (d_.topology.nodes[id].stage < d_.topology.horizon) {
        h(2 * id, 2 * id) += node_prob_[id] * 2.0 * d_.weights.r[0];
        h(2 * id + 1, 2 * id + 1) += node_prob_[id] * 2.0 * d_.weights.r[1];
      }
    }
  }

  double objective_value() const { return obj_; }
  const Eigen::VectorXd& objective_grad() const { return obj_grad_; }
  const Eigen::VectorXd& cons_values() const { return cons_; }
  const Eigen::MatrixXd& cons_jacobian() const { return cons_jac_; }

 private:
  void compute(const Eigen::VectorXd& u, bool with_derivatives);

  OcpData d_;
  ConstraintLayout layout_;
  int nu_{0};

  bool cached_{false};
  bool has_derivatives_{false};
  Eigen::VectorXd last_u_;

  std::vector<JointState> states_;
  std::vector<Eigen::MatrixXd> sens_;      // 8 x nu per node
  std::vector<double> node_prob_;
  std::vector<Eigen::VectorXd> glog_;      // grad of log node probability

  double obj_{0.0};
  Eigen::VectorXd obj_grad_;
  Eigen::VectorXd cons_;
  Eigen::MatrixXd cons_jac_;
};

void TreeOcpEvaluator::compute(const Eigen::VectorXd& u, bool with_derivatives) {
  const TreeTopology& topo = d_.topology;
  const int n_nodes = topo.num_nodes();
  if (u.size() != nu_) {
    throw std::invalid_argument("TreeOcpEvaluator: control vector size mismatch");
  }
  const double dt = d_.config.dt;

  states_.resize(n_nodes);
  states_[0] = d_.root_state;
  node_prob_.assign(n_nodes, 1.0);
  if (with_derivatives) {
    sens_.assign(n_nodes, Eigen::MatrixXd::Zero(8, nu_));
    glog_.assign(n_nodes, Eigen::VectorXd::Zero(nu_));
  }

  // Forward pass: states, sensitivities, node probabilities.
  for (int id = 1; id < n_nodes; ++id) {
    const TreeNode& node = topo.nodes[id];
    const int a = node.ancestor;
    const JointState& parent = states_[a];
    const ControlInput ua{u[2 * a], u[2 * a + 1]};
    const Maneuver mode = static_cast<Maneuver>(node.mode);

    JointState next;
    next.ego = step(parent.ego, ua, d_.geom, dt);
    next.target = target_step(parent, mode, d_.target_params, d_.geom, dt);
    states_[id] = next;

    if (with_derivatives) {
      const StepJacobian ego_jac = step_jacobian(parent.ego, ua, d_.geom, dt);
      // Target advances with input (a(v_t), 0): beta = 0.
      Eigen::Matrix4d At = Eigen::Matrix4d::Identity();
      const double ct = std::cos(parent.target.psi);
      const double st = std::sin(parent.target.psi);
      At(0, 2) = dt * ct;
      At(0, 3) = -dt * parent.target.v * st;
      At(1, 2) = dt * st;
      At(1, 3) = dt * parent.target.v * ct;
      At(2, 2) = 1.0 + dt * base_acceleration_slope(parent, mode, d_.target_params);

      Eigen::MatrixXd& S = sens_[id];
      S.topRows<4>().noalias() = ego_jac.wrt_state * sens_[a].topRows<4>();
      S.block<4, 2>(0, 2 * a) += ego_jac.wrt_input;
      S.bottomRows<4>().noalias() = At * sens_[a].bottomRows<4>();
    }
  }
  for (int id = 0; id < n_nodes; ++id) {
    const TreeNode& node = topo.nodes[id];
    if (node.children.size() <= 1) {
      for (const int c : node.children) {
        node_prob_[c] = node_prob_[id];
        if (with_derivatives) {
          glog_[c] = glog_[id];
        }
      }
      continue;
    }
    const Eigen::VectorXd p = d_.distribution.probs(states_[id]);
    Eigen::MatrixXd dp;
    if (with_derivatives && d_.distribution.is_state_dependent()) {
      dp = d_.distribution.state_jacobian(states_[id]);
    }
    for (const int c : node.children) {
      const int m = topo.nodes[c].mode;
      const double q = std::max(p[m], 1e-300);
      node_prob_[c] = node_prob_[id] * q;
      if (with_derivatives) {
        glog_[c] = glog_[id];
        if (d_.distribution.is_state_dependent()) {
          glog_[c] += (dp.row(m) * sens_[id]).transpose() / q;
        }
      }
    }
  }

  // Objective: sum over nodes of node probability times stage/terminal cost.
  obj_ = 0.0;
  if (with_derivatives) {
    obj_grad_.setZero(nu_);
  }
  for (int id = 0; id < n_nodes; ++id) {
    const bool leaf = topo.nodes[id].stage == topo.horizon;
    const ControlInput ui =
        leaf ? ControlInput{} : ControlInput{u[2 * id], u[2 * id + 1]};
    const double cost = leaf ? terminal_cost(states_[id], d_.weights)
                             : stage_cost(states_[id], ui, d_.weights);
    obj_ += node_prob_[id] * cost;
    if (with_derivatives) {
      obj_grad_ += cost * node_prob_[id] * glog_[id];
      const Eigen::Vector4d dz = states_[id].ego.vec() - d_.weights.z_ref.vec();
      const Eigen::Vector4d dcost_dego = 2.0 * d_.weights.q.asDiagonal() * dz;
      obj_grad_.noalias() +=
          node_prob_[id] * (dcost_dego.transpose() * sens_[id].topRows<4>()).transpose();
      if (!leaf) {
        obj_grad_[2 * id] += node_prob_[id] * 2.0 * d_.weights.r[0] * ui.accel;
        obj_grad_[2 * id + 1] += node_prob_[id] * 2.0 * d_.weights.r[1] * ui.steer;
      }
    }
  }

  // Constraints.
  cons_.setZero(layout_.total);
  if (with_derivatives) {
    cons_jac_.setZero(layout_.total, nu_);
  }
  const int n_pairs = d_.collision.num_circles * d_.collision.num_circles;

  int row = layout_.chance_begin;
  for (const int id : layout_.multi_child_nodes) {
    const Eigen::VectorXd p = d_.distribution.probs(states_[id]);
    Eigen::MatrixXd dp;
    if (with_derivatives && d_.distribution.is_state_dependent()) {
      dp = d_.distribution.state_jacobian(states_[id]);
    }
    double value = 0.0;
    for (const int c : topo.nodes[id].children) {
      const int m = topo.nodes[c].mode;
      const Eigen::VectorXd g = collision_margin(states_[c], d_.collision);
      double sum_sig = 0.0;
      Eigen::VectorXd slope(n_pairs);
      for (int k = 0; k < n_pairs; ++k) {
        sum_sig += sigmoid(g[k], d_.config.sigmoid);
        if (with_derivatives) {
          slope[k] = sigmoid_slope(g[k], d_.config.sigmoid);
        }
      }
      value += p[m] * sum_sig;
      if (with_derivatives) {
        if (d_.distribution.is_state_dependent()) {
          cons_jac_.row(row) += sum_sig * dp.row(m) * sens_[id];
        }
        const Eigen::MatrixXd gj = collision_margin_jacobian(states_[c], d_.collision);
        cons_jac_.row(row) += p[m] * (slope.transpose() * gj) * sens_[c];
      }
    }
    cons_[row] = value;
    ++row;
  }

  row = layout_.hard_begin;
  for (const int c : layout_.single_child_children) {
    cons_.segment(row, n_pairs) = collision_margin(states_[c], d_.collision);
    if (with_derivatives) {
      cons_jac_.block(row, 0, n_pairs, nu_).noalias() =
          collision_margin_jacobian(states_[c], d_.collision) * sens_[c];
    }
    row += n_pairs;
  }

  row = layout_.bounds_begin;
  for (int id = 1; id < n_nodes; ++id) {
    cons_[row] = states_[id].ego.py;
    cons_[row + 1] = states_[id].ego.v;
    cons_[row + 2] = states_[id].ego.psi;
    if (with_derivatives) {
      cons_jac_.row(row) = sens_[id].row(1);
      cons_jac_.row(row + 1) = sens_[id].row(2);
      cons_jac_.row(row + 2) = sens_[id].row(3);
    }
    row += 3;
  }

  row = layout_.slew_begin;
  cons_[row] = u[0] - d_.prev_input.accel;
  cons_[row + 1] = u[1] - d_.prev_input.steer;
  if (with_derivatives) {
    cons_jac_(row, 0) = 1.0;
    cons_jac_(row + 1, 1) = 1.0;
  }
  row += 2;
  for (int id = 1; id < topo.num_nonleaf(); ++id) {
    const int a = topo.nodes[id].ancestor;
    cons_[row] = u[2 * id] - u[2 * a];
    cons_[row + 1] = u[2 * id + 1] - u[2 * a + 1];
    if (with_derivatives) {
      cons_jac_(row, 2 * id) = 1.0;
      cons_jac_(row, 2 * a) = -1.0;
      cons_jac_(row + 1, 2 * id + 1) = 1.0;
      cons_jac_(row + 1, 2 * a + 1) = -1.0;
    }
    row += 2;
  }

  last_u_ = u;
  cached_ = true;
  has_derivatives_ = with_derivatives;
}

}  // namespace

double tree_objective(const Eigen::VectorXd& controls, const OcpData& data,
                      Eigen::VectorXd* grad) {
  TreeOcpEvaluator eval(data);
  eval.ensure(controls, grad != nullptr);
  if (grad != nullptr) {
    *grad = eval.objective_grad();
  }
  return eval.objective_value();
}

void chance_constraints(const Eigen::VectorXd& controls, const OcpData& data,
                        Eigen::VectorXd& values, Eigen::MatrixXd* jacobian) {
  TreeOcpEvaluator eval(data);
  eval.ensure(controls, jacobian != nullptr);
  const ConstraintLayout& layout = eval.layout();
  const int rows = layout.bounds_begin;  // chance + hard families
  values = eval.cons_values().head(rows);
  if (jacobian != nullptr) {
    *jacobian = eval.cons_jacobian().topRows(rows);
  }
}

NlpProblem assemble(const OcpData& data) {
  auto eval = std::make_shared<TreeOcpEvaluator>(data);
  const ConstraintLayout& layout = eval->layout();
  const TreeTopology& topo = data.topology;
  const int nu = eval->num_vars();
  const double inf = std::numeric_limits<double>::infinity();

  NlpProblem p;
  p.num_vars = nu;
  p.var_lower.resize(nu);
  p.var_upper.resize(nu);
  for (int i = 0; i < topo.num_nonleaf(); ++i) {
    p.var_lower[2 * i] = data.config.a_min;
    p.var_upper[2 * i] = data.config.a_max;
    p.var_lower[2 * i + 1] = data.config.steer_min;
    p.var_upper[2 * i + 1] = data.config.steer_max;
  }

  p.cons_lower.setConstant(layout.total, -inf);
  p.cons_upper.setConstant(layout.total, inf);
  for (int i = layout.chance_begin; i < layout.hard_begin; ++i) {
    p.cons_upper[i] = data.config.gamma;
  }
  for (int i = layout.hard_begin; i < layout.bounds_begin; ++i) {
    p.cons_upper[i] = 0.0;
  }
  for (int i = layout.bounds_begin; i < layout.slew_begin; i += 3) {
    p.cons_lower[i] = data.config.y_min;
    p.cons_upper[i] = data.config.y_max;
    p.cons_lower[i + 1] = data.config.v_min;
    p.cons_upper[i + 1] = data.config.v_max;
    p.cons_lower[i + 2] = data.config.psi_min;
    p.cons_upper[i + 2] = data.config.psi_max;
  }
  for (int i = layout.slew_begin; i < layout.total; i += 2) {
    p.cons_lower[i] = -data.config.du_max[0];
    p.cons_upper[i] = data.config.du_max[0];
    p.cons_lower[i + 1] = -data.config.du_max[1];
    p.cons_upper[i + 1] = data.config.du_max[1];
  }

  p.objective = [eval](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    eval->ensure(x, grad != nullptr);
    if (grad != nullptr) {
      *grad = eval->objective_grad();
    }
    return eval->objective_value();
  };
  p.constraints = [eval](const Eigen::VectorXd& x, Eigen::VectorXd& values,
                         Eigen::MatrixXd* jac) {
    eval->ensure(x, jac != nullptr);
    values = eval->cons_values();
    if (jac != nullptr) {
      *jac = eval->cons_jacobian();
    }
  };
  p.hessian = [eval](const Eigen::VectorXd& x, Eigen::MatrixXd& h) {
    eval->gauss_newton(x, h);
  };
  return p;
}

std::string dump_problem_json(const NlpProblem& problem) {
  nlohmann::json j;
  j["num_vars"] = problem.num_vars;
  j["num_cons"] = problem.num_cons();
  j["var_lower"] = std::vector<double>(problem.var_lower.data(),
                                       problem.var_lower.data() + problem.var_lower.size());
  j["var_upper"] = std::vector<double>(problem.var_upper.data(),
                                       problem.var_upper.data() + problem.var_upper.size());
  j["cons_lower"] = std::vector<double>(problem.cons_lower.data(),
                                        problem.cons_lower.data() + problem.cons_lower.size());
  j["cons_upper"] = std::vector<double>(problem.cons_upper.data(),
                                        problem.cons_upper.data() + problem.cons_upper.size());
  return j.dump(2);
}

}  // namespace lcmpc
