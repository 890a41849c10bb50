#pragma once

#include <string>

#include "lcmpc/behavior.hpp"
#include "lcmpc/dynamics.hpp"
#include "lcmpc/nlp_solver.hpp"
#include "lcmpc/ocp.hpp"

namespace lcmpc {

/// Full experiment configuration. Defaults reproduce the reference study
/// setup (target-driver parameters, MPC weights and bounds, episode
/// randomization and the scenario-tree shape).
struct ExperimentConfig {
  VehicleGeometry geometry{};
  TargetParams nominal_target{};  // gains/limits used for labeling and planning
  CostWeights weights{};
  OcpConfig ocp{};
  CollisionGeometry collision{};

  // Scenario tree.
  int horizon{20};
  int num_modes{2};
  int branch_horizon{11};
  int timescale{5};

  // Online learning.
  int window_length{15};
  double lambda{1.0};
  double ridge{1e-3};
  FeatureMap features{};

  // Episode randomization (relative longitudinal/lateral offsets, fixed
  // anchors, velocity range) and per-driver parameter distributions.
  double sim_time{6.0};
  double dpx_min{0.0}, dpx_max{5.0};
  double dpy_min{-5.0}, dpy_max{-3.0};
  double ego_px_init{6.0};
  double target_py_init{4.0};
  double v_init_min{23.0}, v_init_max{25.0};
  double np_min{0.1}, np_max{1.0};
  double c_thres_min{0.0}, c_thres_max{4.0};

  // Offline dataset generation: ego headings sampled in this range so the
  // prior sees merging as well as lane-keeping states.
  double dataset_heading_min{-0.25};
  double dataset_heading_max{0.25};

  SolverOptions solver{};

  int sim_steps() const { return static_cast<int>(std::lround(sim_time / ocp.dt)); }

  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& text);
  static ExperimentConfig load(const std::string& path);
  void save(const std::string& path) const;

  /// Defaults with the sigmoid shift calibrated; use this instead of {}.
  static ExperimentConfig defaults();
};

}  // namespace lcmpc
