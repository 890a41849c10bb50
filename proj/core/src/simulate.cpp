#include "lcmpc/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "lcmpc/behavior.hpp"
#include "lcmpc/scenario_tree.hpp"

namespace lcmpc {

using nlohmann::json;

const char* to_string(EstimatorVariant variant) {
  switch (variant) {
    case EstimatorVariant::kMle:
      return "MLE";
    case EstimatorVariant::kMap:
      return "MAP";
    case EstimatorVariant::kPrior:
      return "PRIOR";
    case EstimatorVariant::kEmp:
      return "EMP";
    case EstimatorVariant::kUni:
      return "UNI";
    case EstimatorVariant::kBra:
      return "BRA";
    case EstimatorVariant::kTra:
      return "TRA";
  }
  return "unknown";
}

EstimatorVariant parse_variant(const std::string& tag) {
  for (const EstimatorVariant v : kAllVariants) {
    if (tag == to_string(v)) return v;
  }
  throw std::invalid_argument("unknown estimator variant: " + tag);
}

const char* to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::kCollision:
      return "collision";
    case Outcome::kFront:
      return "front";
    case Outcome::kBehind:
      return "behind";
    case Outcome::kTimeOut:
      return "time-out";
  }
  return "unknown";
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace

EpisodeSetup sample_episode(const ExperimentConfig& config, std::uint64_t master_seed,
                            int index) {
  EpisodeSetup setup;
  setup.seed = splitmix64(master_seed ^ splitmix64(static_cast<std::uint64_t>(index) + 1));
  std::mt19937_64 rng(setup.seed);

  const double dpx = uniform(rng, config.dpx_min, config.dpx_max);
  const double dpy = uniform(rng, config.dpy_min, config.dpy_max);
  setup.init.ego.px = config.ego_px_init;
  setup.init.ego.py = config.target_py_init + dpy;
  setup.init.ego.v = uniform(rng, config.v_init_min, config.v_init_max);
  setup.init.ego.psi = 0.0;
  setup.init.target.px = config.ego_px_init - dpx;
  setup.init.target.py = config.target_py_init;
  setup.init.target.v = uniform(rng, config.v_init_min, config.v_init_max);
  setup.init.target.psi = 0.0;

  setup.driver = config.nominal_target;
  setup.driver.np = uniform(rng, config.np_min, config.np_max);
  setup.driver.c_thres = uniform(rng, config.c_thres_min, config.c_thres_max);
  return setup;
}

bool box_overlap(const VehicleState& a, const VehicleState& b,
                 const VehicleGeometry& geom) {
  const Eigen::Vector2d half(geom.length / 2.0, geom.width / 2.0);
  const Eigen::Vector2d d(b.px - a.px, b.py - a.py);
  const Eigen::Vector2d axes_a[2] = {{std::cos(a.psi), std::sin(a.psi)},
                                     {-std::sin(a.psi), std::cos(a.psi)}};
  const Eigen::Vector2d axes_b[2] = {{std::cos(b.psi), std::sin(b.psi)},
                                     {-std::sin(b.psi), std::cos(b.psi)}};
  const Eigen::Vector2d* all[4] = {&axes_a[0], &axes_a[1], &axes_b[0], &axes_b[1]};
  for (const Eigen::Vector2d* axis : all) {
    const double ra = half[0] * std::abs(axis->dot(axes_a[0])) +
                      half[1] * std::abs(axis->dot(axes_a[1]));
    const double rb = half[0] * std::abs(axis->dot(axes_b[0])) +
                      half[1] * std::abs(axis->dot(axes_b[1]));
    if (std::abs(axis->dot(d)) >= ra + rb) {
      return false;  // separating axis
    }
  }
  return true;
}

EpisodeResult run_episode(const ExperimentConfig& config, const EpisodeSetup& setup,
                          EstimatorVariant variant, const IntentModel& prior) {
  const TreeTopology topology = TreeTopology::build(config.horizon, config.num_modes,
                                                    config.branch_horizon, config.timescale);
  const double dt = config.ocp.dt;
  const int steps = config.sim_steps();

  EpisodeResult result;
  result.steps.reserve(steps);

  const bool learns =
      variant == EstimatorVariant::kMle || variant == EstimatorVariant::kMap;
  IntentModel model = variant == EstimatorVariant::kMle
                          ? IntentModel::zero(config.features, config.num_modes)
                          : prior;
  ObservationWindow window(config.window_length);
  Eigen::VectorXd mode_counts = Eigen::VectorXd::Zero(config.num_modes);

  JointState joint = setup.init;
  ControlInput prev_input{0.0, 0.0};
  Eigen::VectorXd prev_solution;
  bool collided = false;

  for (int t = 0; t < steps; ++t) {
    // Ground-truth driver decision for this step, then the labeled update.
    const Maneuver mode = pidm_decide(joint, setup.driver, dt);
    const double observed_accel = base_acceleration(joint, mode, setup.driver);
    const Maneuver label = label_maneuver(observed_accel, joint, config.nominal_target);
    if (learns) {
      window.push({joint, label});
      model = update_online(model, window, config.lambda);
    }
    mode_counts[static_cast<int>(label)] += 1.0;

    ModeDistribution distribution = [&]() {
      switch (variant) {
        case EstimatorVariant::kMle:
        case EstimatorVariant::kMap:
          return ModeDistribution::logistic(model);
        case EstimatorVariant::kPrior:
          return ModeDistribution::logistic(prior);
        case EstimatorVariant::kEmp:
          return ModeDistribution::fixed(mode_counts / mode_counts.sum());
        case EstimatorVariant::kUni:
          return ModeDistribution::fixed(
              Eigen::VectorXd::Constant(config.num_modes, 1.0 / config.num_modes));
        case EstimatorVariant::kBra:
          return ModeDistribution::fixed(Eigen::Vector2d(1.0, 0.0));
        case EstimatorVariant::kTra:
          return ModeDistribution::fixed(Eigen::Vector2d(0.0, 1.0));
      }
      throw std::logic_error("unreachable");
    }();

    const OcpData data{topology,         joint,          prev_input,
                       distribution,     config.ocp,     config.weights,
                       config.collision, config.nominal_target,
                       config.geometry};
    const NlpProblem problem = assemble(data);

    const auto acceptable = [&](const SolveResult& r) {
      return r.status != SolveStatus::kInfeasible && r.max_violation <= 1e-4;
    };
    Eigen::VectorXd guess = prev_solution.size() > 0
                                ? warm_start_shift(prev_solution, topology)
                                : Eigen::VectorXd::Zero(problem.num_vars);
    SolveResult sol = solve(problem, guess, config.solver);
    SolverOptions retry_opts = config.solver;
    retry_opts.max_iter = std::max(config.solver.max_iter / 2, 20);
    if (!acceptable(sol)) {
      // Evasive basin: ramp every branch toward hard braking with the wheels
      // straight, respecting the slew limits edge by edge. Recovers cases
      // where the shifted plan went stale after an intent flip.
      Eigen::VectorXd brake(problem.num_vars);
      const auto ramp = [](double from, double to, double dmax) {
        return from + std::clamp(to - from, -dmax, dmax);
      };
      for (int id = 0; id < topology.num_nonleaf(); ++id) {
        const double pa = id == 0 ? prev_input.accel : brake[2 * topology.nodes[id].ancestor];
        const double ps = id == 0 ? prev_input.steer : brake[2 * topology.nodes[id].ancestor + 1];
        brake[2 * id] = ramp(pa, config.ocp.a_min, config.ocp.du_max[0]);
        brake[2 * id + 1] = ramp(ps, 0.0, config.ocp.du_max[1]);
      }
      SolveResult retry = solve(problem, brake, retry_opts);
      if (acceptable(retry) || retry.max_violation < sol.max_violation) {
        sol = std::move(retry);
      }
    }
    if (!acceptable(sol) && prev_solution.size() > 0 && sol.max_violation < 0.3) {
      // A large stalled violation on both starts means the constraint set is
      // (at least locally) empty; a third start from rest will not help.
      // Retry from rest, but never trade a better iterate for a worse one.
      SolveResult retry = solve(problem, Eigen::VectorXd::Zero(problem.num_vars),
                                retry_opts);
      if (acceptable(retry) || retry.max_violation < sol.max_violation) {
        sol = std::move(retry);
      }
    }

    StepLog log;
    log.step = t;
    log.state = joint;
    log.target_mode = mode;
    log.label = label;
    log.mode_probs = distribution.probs(joint);
    log.solver_status = sol.status;
    log.solver_iterations = sol.iterations;
    log.solver_violation = sol.max_violation;
    log.solver_diagnostic = sol.diagnostic;

    ControlInput applied;
    if (!acceptable(sol)) {
      // Under model drift the constraint set can momentarily be empty. The
      // least-violating plan is still the best available evasive action, so
      // apply its first input instead of a state-blind hold.
      log.fallback = true;
      ++result.solver_failures;
    }
    const auto ramp_toward = [&](const ControlInput& u, double accel_to, double steer_to) {
      ControlInput r;
      r.accel = u.accel + std::clamp(accel_to - u.accel, -config.ocp.du_max[0],
                                     config.ocp.du_max[0]);
      r.steer = u.steer + std::clamp(steer_to - u.steer, -config.ocp.du_max[1],
                                     config.ocp.du_max[1]);
      r.accel = std::clamp(r.accel, config.ocp.a_min, config.ocp.a_max);
      r.steer = std::clamp(r.steer, config.ocp.steer_min, config.ocp.steer_max);
      return r;
    };
    const bool plan_usable =
        sol.solution.size() == problem.num_vars && sol.solution.allFinite();
    if (plan_usable) {
      applied = ControlInput::from_vec(sol.solution.head<2>());
      prev_solution = sol.solution;
    } else {
      applied = ramp_toward(prev_input, 0.0, 0.0);
      prev_solution.resize(0);
    }
    if (!acceptable(sol) && sol.max_violation > 1e-2) {
      // The plan carries substantial violation, usually because the stall sat
      // on a flat stretch of the constraint surrogate where its inputs are
      // arbitrary. Compare a few maneuver primitives (and the plan itself,
      // continued along its own tree branch) by worst-case clearance over a
      // short rollout against both maneuvers of the nominal target model, and
      // apply the most conservative winner.
      const int kLook = 10;
      const double wheelbase = config.geometry.lf + config.geometry.lr;
      // Candidate control sequences; all slew-consistent with prev_input.
      std::vector<std::vector<ControlInput>> cands;
      const auto heading_seq = [&](double accel_to, double gain) {
        std::vector<ControlInput> seq;
        VehicleState z = joint.ego;
        ControlInput u = prev_input;
        for (int k = 0; k < kLook; ++k) {
          const double want_psi = std::clamp(-gain * z.py, -0.5, 0.5);
          const double want_steer = std::atan(
              (want_psi - z.psi) * wheelbase / (std::max(z.v, 1.0) * dt));
          u = ramp_toward(u, accel_to, want_steer);
          seq.push_back(u);
          z = step(z, u, config.geometry, dt);
          z.v = std::clamp(z.v, config.ocp.v_min, config.ocp.v_max);
        }
        return seq;
      };
      const auto ramp_seq = [&](double accel_to, double steer_to) {
        std::vector<ControlInput> seq;
        ControlInput u = prev_input;
        for (int k = 0; k < kLook; ++k) {
          u = ramp_toward(u, accel_to, steer_to);
          seq.push_back(u);
        }
        return seq;
      };
      cands.push_back(ramp_seq(config.ocp.a_min, 0.0));     // brake straight
      cands.push_back(heading_seq(config.ocp.a_max, 0.0));  // speed up, hold heading level
      cands.push_back(heading_seq(config.ocp.a_max, 0.3));  // speed up, return to own lane
      cands.push_back(heading_seq(config.ocp.a_min, 0.3));  // brake, return to own lane
      // Plan sequences per target maneuver, following the matching tree branch.
      std::vector<std::vector<ControlInput>> plan_seq(config.num_modes);
      if (plan_usable) {
        for (int m2 = 0; m2 < config.num_modes; ++m2) {
          int node = 0;
          for (int k = 0; k < kLook; ++k) {
            plan_seq[m2].push_back(
                ControlInput::from_vec(sol.solution.segment<2>(2 * node)));
            const auto& children = topology.nodes[node].children;
            if (children.empty()) break;
            int next = children.front();
            for (const int ch : children) {
              if (topology.nodes[ch].mode == m2) next = ch;
            }
            if (next >= topology.num_nonleaf()) break;
            node = next;
          }
        }
      }
      const auto clearance = [&](const std::vector<std::vector<ControlInput>>& per_mode) {
        double worst = std::numeric_limits<double>::infinity();
        for (int m2 = 0; m2 < config.num_modes; ++m2) {
          const auto& seq = per_mode[per_mode.size() == 1 ? 0 : m2];
          if (seq.empty()) return -std::numeric_limits<double>::infinity();
          JointState s = joint;
          for (int k = 0; k < kLook; ++k) {
            const JointState prev = s;
            const ControlInput& u = seq[std::min<std::size_t>(k, seq.size() - 1)];
            s.ego = step(prev.ego, u, config.geometry, dt);
            s.target = target_step(prev, static_cast<Maneuver>(m2),
                                   config.nominal_target, config.geometry, dt);
            s.ego.v = std::clamp(s.ego.v, config.ocp.v_min, config.ocp.v_max);
            s.target.v = std::max(s.target.v, 0.0);
            const auto ce = circle_centers(s.ego, config.collision);
            const auto ct = circle_centers(s.target, config.collision);
            for (const auto& a : ce) {
              for (const auto& b : ct) {
                worst = std::min(worst, (a - b).norm());
              }
            }
          }
        }
        return worst;
      };
      double best_clear = plan_usable ? clearance(plan_seq)
                                      : -std::numeric_limits<double>::infinity();
      int best_cand = -1;
      for (std::size_t ci = 0; ci < cands.size(); ++ci) {
        const double cl = clearance({cands[ci]});
        // Prefer the optimizer's plan unless a primitive is clearly safer.
        if (cl > best_clear + 0.05) {
          best_clear = cl;
          best_cand = static_cast<int>(ci);
        }
      }
      if (best_cand >= 0) {
        applied = cands[static_cast<std::size_t>(best_cand)].front();
        prev_solution.resize(0);
      }
    }
    applied.accel = std::clamp(applied.accel,
                               std::max(config.ocp.a_min, prev_input.accel - config.ocp.du_max[0]),
                               std::min(config.ocp.a_max, prev_input.accel + config.ocp.du_max[0]));
    applied.steer = std::clamp(applied.steer,
                               std::max(config.ocp.steer_min, prev_input.steer - config.ocp.du_max[1]),
                               std::min(config.ocp.steer_max, prev_input.steer + config.ocp.du_max[1]));
    log.input = applied;
    log.stage_cost = stage_cost(joint, applied, config.weights);
    result.closed_loop_cost += log.stage_cost;

    const JointState before = joint;
    joint.ego = step(before.ego, applied, config.geometry, dt);
    joint.target = target_step(before, mode, setup.driver, config.geometry, dt);
    joint.ego.v = std::clamp(joint.ego.v, config.ocp.v_min, config.ocp.v_max);
    joint.target.v = std::max(joint.target.v, 0.0);
    prev_input = applied;
    result.steps.push_back(std::move(log));

    if (box_overlap(joint.ego, joint.target, config.geometry)) {
      collided = true;
      break;
    }
  }

  if (collided) {
    result.outcome = Outcome::kCollision;
  } else {
    const bool settled = std::abs(joint.ego.py - config.weights.z_ref.py) <= 0.1 &&
                         std::abs(joint.ego.psi) <= 0.01;
    if (!settled) {
      result.outcome = Outcome::kTimeOut;
    } else {
      result.outcome =
          joint.ego.px > joint.target.px ? Outcome::kFront : Outcome::kBehind;
    }
  }
  if (learns || variant == EstimatorVariant::kPrior) {
    result.final_theta = (variant == EstimatorVariant::kPrior) ? prior.theta : model.theta;
  }
  return result;
}

namespace {

double quantile75(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double h = 0.75 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

}  // namespace

StudyResult run_study(const ExperimentConfig& config, int num_episodes,
                      std::uint64_t master_seed,
                      std::span<const EstimatorVariant> variants, const IntentModel& prior,
                      int num_workers) {
  if (num_episodes < 1 || variants.empty()) {
    throw std::invalid_argument("run_study: need at least one episode and one variant");
  }
  const int nv = static_cast<int>(variants.size());
  std::vector<std::vector<EpisodeResult>> results(
      static_cast<std::size_t>(num_episodes));

  int workers = num_workers > 0 ? num_workers
                                : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::clamp(workers, 1, num_episodes);

  std::atomic<int> next{0};
  const auto worker = [&]() {
    for (int i = next.fetch_add(1); i < num_episodes; i = next.fetch_add(1)) {
      const EpisodeSetup setup = sample_episode(config, master_seed, i);
      auto& row = results[static_cast<std::size_t>(i)];
      row.reserve(nv);
      for (const EstimatorVariant v : variants) {
        row.push_back(run_episode(config, setup, v, prior));
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  StudyResult study;
  study.costs.assign(nv, {});
  for (int v = 0; v < nv; ++v) {
    VariantSummary s;
    s.variant = variants[v];
    for (int i = 0; i < num_episodes; ++i) {
      const EpisodeResult& r = results[i][v];
      switch (r.outcome) {
        case Outcome::kCollision:
          ++s.collision;
          break;
        case Outcome::kFront:
          ++s.front;
          break;
        case Outcome::kBehind:
          ++s.behind;
          break;
        case Outcome::kTimeOut:
          ++s.timeout;
          break;
      }
      study.costs[v].push_back(r.closed_loop_cost);
    }
    s.mean_cost = std::accumulate(study.costs[v].begin(), study.costs[v].end(), 0.0) /
                  static_cast<double>(num_episodes);
    s.q3_cost = quantile75(study.costs[v]);
    study.summaries.push_back(s);
  }
  return study;
}

std::string study_csv(const StudyResult& study) {
  std::ostringstream out;
  out << "variant,collision,front,behind,time_out,mean_cost,q3_cost\n";
  for (const VariantSummary& s : study.summaries) {
    out << to_string(s.variant) << ',' << s.collision << ',' << s.front << ','
        << s.behind << ',' << s.timeout << ',' << json(s.mean_cost).dump() << ','
        << json(s.q3_cost).dump() << "\n";
  }
  return out.str();
}

namespace {

json state_json(const VehicleState& s) { return {s.px, s.py, s.v, s.psi}; }

}  // namespace

std::string episode_jsonl(const EpisodeSetup& setup, EstimatorVariant variant,
                          const EpisodeResult& result) {
  std::ostringstream out;
  json header;
  header["variant"] = to_string(variant);
  header["seed"] = setup.seed;
  header["init"] = {{"ego", state_json(setup.init.ego)},
                    {"target", state_json(setup.init.target)}};
  header["driver"] = {{"np", setup.driver.np}, {"c_thres", setup.driver.c_thres}};
  header["outcome"] = to_string(result.outcome);
  header["closed_loop_cost"] = result.closed_loop_cost;
  header["solver_failures"] = result.solver_failures;
  out << header.dump() << "\n";
  for (const StepLog& s : result.steps) {
    json j;
    j["step"] = s.step;
    j["ego"] = state_json(s.state.ego);
    j["target"] = state_json(s.state.target);
    j["input"] = {s.input.accel, s.input.steer};
    j["target_mode"] = static_cast<int>(s.target_mode);
    j["label"] = static_cast<int>(s.label);
    j["mode_probs"] = std::vector<double>(s.mode_probs.begin(), s.mode_probs.end());
    j["solver_status"] = to_string(s.solver_status);
    j["solver_iterations"] = s.solver_iterations;
    j["solver_violation"] = s.solver_violation;
    if (!s.solver_diagnostic.empty()) {
      j["solver_diagnostic"] = s.solver_diagnostic;
    }
    j["fallback"] = s.fallback;
    j["stage_cost"] = s.stage_cost;
    out << j.dump() << "\n";
  }
  return out.str();
}

Dataset generate_offline_dataset(const ExperimentConfig& config, int num_train,
                                 int num_validation, int num_drivers,
                                 std::uint64_t seed) {
  if (num_train < 1 || num_validation < 1 || num_drivers < 1) {
    throw std::invalid_argument("generate_offline_dataset: counts must be positive");
  }
  std::mt19937_64 rng(splitmix64(seed));
  Dataset dataset;
  dataset.drivers.reserve(num_drivers);
  for (int d = 0; d < num_drivers; ++d) {
    TargetParams p = config.nominal_target;
    p.np = uniform(rng, config.np_min, config.np_max);
    p.c_thres = uniform(rng, config.c_thres_min, config.c_thres_max);
    dataset.drivers.push_back(p);
  }
  const int total = num_train + num_validation;
  for (int i = 0; i < total; ++i) {
    JointState joint;
    joint.ego.px = config.ego_px_init;
    joint.ego.py = config.target_py_init + uniform(rng, config.dpy_min, config.dpy_max);
    joint.ego.v = uniform(rng, config.v_init_min, config.v_init_max);
    joint.ego.psi = uniform(rng, config.dataset_heading_min, config.dataset_heading_max);
    joint.target.px = config.ego_px_init - uniform(rng, config.dpx_min, config.dpx_max);
    joint.target.py = config.target_py_init;
    joint.target.v = uniform(rng, config.v_init_min, config.v_init_max);
    joint.target.psi = 0.0;
    const TargetParams& driver = dataset.drivers[i % num_drivers];
    const Maneuver label = pidm_decide(joint, driver, config.ocp.dt);
    auto& split = i < num_train ? dataset.train : dataset.validation;
    split.push_back({joint, label});
  }
  return dataset;
}

std::string dataset_csv(std::span<const Observation> data) {
  std::ostringstream out;
  out << "ego_px,ego_py,ego_v,ego_psi,tv_px,tv_py,tv_v,tv_psi,maneuver\n";
  for (const Observation& obs : data) {
    const auto z = obs.state.vec();
    for (int i = 0; i < 8; ++i) out << json(z[i]).dump() << ',';
    out << static_cast<int>(obs.maneuver) << "\n";
  }
  return out.str();
}

std::vector<Observation> dataset_from_csv(const std::string& text) {
  std::vector<Observation> data;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    Eigen::Matrix<double, 8, 1> z;
    std::string cell;
    for (int i = 0; i < 8; ++i) {
      if (!std::getline(row, cell, ',')) {
        throw std::runtime_error("dataset_from_csv: malformed row: " + line);
      }
      z[i] = std::stod(cell);
    }
    if (!std::getline(row, cell, ',')) {
      throw std::runtime_error("dataset_from_csv: malformed row: " + line);
    }
    data.push_back({JointState::from_vec(z), static_cast<Maneuver>(std::stoi(cell))});
  }
  return data;
}

double misclassification(const IntentModel& model, std::span<const Observation> data) {
  if (data.empty()) return 0.0;
  int wrong = 0;
  for (const Observation& obs : data) {
    const Eigen::VectorXd p = model.predict(obs.state);
    Eigen::Index best = 0;
    p.maxCoeff(&best);
    if (best != static_cast<Eigen::Index>(obs.maneuver)) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(data.size());
}

}  // namespace lcmpc
