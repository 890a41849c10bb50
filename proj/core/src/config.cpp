#include "lcmpc/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "lcmpc/risk.hpp"

namespace lcmpc {

using nlohmann::json;

namespace {

json to_json_obj(const ExperimentConfig& c) {
  json j;
  j["geometry"] = {{"lf", c.geometry.lf},
                   {"lr", c.geometry.lr},
                   {"length", c.geometry.length},
                   {"width", c.geometry.width}};
  j["target"] = {{"k_brake", c.nominal_target.k_brake},
                 {"k_track", c.nominal_target.k_track},
                 {"a_max_comf", c.nominal_target.a_max_comf},
                 {"a_min", c.nominal_target.a_min},
                 {"v_max", c.nominal_target.v_max},
                 {"np", c.nominal_target.np},
                 {"c_thres", c.nominal_target.c_thres}};
  j["weights"] = {{"q", {c.weights.q[0], c.weights.q[1], c.weights.q[2], c.weights.q[3]}},
                  {"r", {c.weights.r[0], c.weights.r[1]}},
                  {"z_ref",
                   {c.weights.z_ref.px, c.weights.z_ref.py, c.weights.z_ref.v,
                    c.weights.z_ref.psi}}};
  j["ocp"] = {{"gamma", c.ocp.gamma},
              {"sigmoid_amplitude", c.ocp.sigmoid.amplitude},
              {"sigmoid_steepness", c.ocp.sigmoid.steepness},
              {"sigmoid_shift", c.ocp.sigmoid.shift},
              {"du_max", {c.ocp.du_max[0], c.ocp.du_max[1]}},
              {"y_min", c.ocp.y_min},
              {"y_max", c.ocp.y_max},
              {"v_min", c.ocp.v_min},
              {"v_max", c.ocp.v_max},
              {"psi_min", c.ocp.psi_min},
              {"psi_max", c.ocp.psi_max},
              {"a_min", c.ocp.a_min},
              {"a_max", c.ocp.a_max},
              {"steer_min", c.ocp.steer_min},
              {"steer_max", c.ocp.steer_max},
              {"dt", c.ocp.dt}};
  j["collision"] = {{"num_circles", c.collision.num_circles},
                    {"radius", c.collision.radius},
                    {"length", c.collision.length},
                    {"width", c.collision.width}};
  j["tree"] = {{"horizon", c.horizon},
               {"num_modes", c.num_modes},
               {"branch_horizon", c.branch_horizon},
               {"timescale", c.timescale}};
  j["learning"] = {
      {"window_length", c.window_length},
      {"lambda", c.lambda},
      {"ridge", c.ridge},
      {"feature_scales",
       {c.features.scales[0], c.features.scales[1], c.features.scales[2],
        c.features.scales[3]}}};
  j["episode"] = {{"sim_time", c.sim_time},
                  {"dpx", {c.dpx_min, c.dpx_max}},
                  {"dpy", {c.dpy_min, c.dpy_max}},
                  {"ego_px_init", c.ego_px_init},
                  {"target_py_init", c.target_py_init},
                  {"v_init", {c.v_init_min, c.v_init_max}},
                  {"np", {c.np_min, c.np_max}},
                  {"c_thres", {c.c_thres_min, c.c_thres_max}},
                  {"dataset_heading", {c.dataset_heading_min, c.dataset_heading_max}}};
  j["solver"] = {{"max_iter", c.solver.max_iter},
                 {"tol_kkt", c.solver.tol_kkt},
                 {"tol_constraint", c.solver.tol_constraint},
                 {"penalty_init", c.solver.penalty_init},
                 {"penalty_max", c.solver.penalty_max},
                 {"qp_max_iter", c.solver.qp_max_iter},
                 {"qp_tol", c.solver.qp_tol},
                 {"line_search_max", c.solver.line_search_max},
                 {"bfgs_init", c.solver.bfgs_init}};
  return j;
}

// Values absent from the file keep their defaults.
template <typename T>
void get_to(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

void get_pair(const json& j, const char* key, double& lo, double& hi) {
  if (j.contains(key)) {
    lo = j.at(key).at(0).get<double>();
    hi = j.at(key).at(1).get<double>();
  }
}

ExperimentConfig from_json_obj(const json& j) {
  ExperimentConfig c = ExperimentConfig::defaults();
  if (j.contains("geometry")) {
    const json& g = j.at("geometry");
    get_to(g, "lf", c.geometry.lf);
    get_to(g, "lr", c.geometry.lr);
    get_to(g, "length", c.geometry.length);
    get_to(g, "width", c.geometry.width);
  }
  if (j.contains("target")) {
    const json& t = j.at("target");
    get_to(t, "k_brake", c.nominal_target.k_brake);
    get_to(t, "k_track", c.nominal_target.k_track);
    get_to(t, "a_max_comf", c.nominal_target.a_max_comf);
    get_to(t, "a_min", c.nominal_target.a_min);
    get_to(t, "v_max", c.nominal_target.v_max);
    get_to(t, "np", c.nominal_target.np);
    get_to(t, "c_thres", c.nominal_target.c_thres);
  }
  if (j.contains("weights")) {
    const json& w = j.at("weights");
    if (w.contains("q")) {
      for (int i = 0; i < 4; ++i) c.weights.q[i] = w.at("q").at(i).get<double>();
    }
    if (w.contains("r")) {
      for (int i = 0; i < 2; ++i) c.weights.r[i] = w.at("r").at(i).get<double>();
    }
    if (w.contains("z_ref")) {
      const json& z = w.at("z_ref");
      c.weights.z_ref = {z.at(0).get<double>(), z.at(1).get<double>(),
                         z.at(2).get<double>(), z.at(3).get<double>()};
    }
  }
  if (j.contains("ocp")) {
    const json& o = j.at("ocp");
    get_to(o, "gamma", c.ocp.gamma);
    get_to(o, "sigmoid_amplitude", c.ocp.sigmoid.amplitude);
    get_to(o, "sigmoid_steepness", c.ocp.sigmoid.steepness);
    if (o.contains("sigmoid_shift")) {
      o.at("sigmoid_shift").get_to(c.ocp.sigmoid.shift);
    } else {
      c.ocp.sigmoid.shift =
          calibrate_shift(c.ocp.sigmoid.amplitude, c.ocp.sigmoid.steepness);
    }
    if (o.contains("du_max")) {
      c.ocp.du_max = {o.at("du_max").at(0).get<double>(),
                      o.at("du_max").at(1).get<double>()};
    }
    get_to(o, "y_min", c.ocp.y_min);
    get_to(o, "y_max", c.ocp.y_max);
    get_to(o, "v_min", c.ocp.v_min);
    get_to(o, "v_max", c.ocp.v_max);
    get_to(o, "psi_min", c.ocp.psi_min);
    get_to(o, "psi_max", c.ocp.psi_max);
    get_to(o, "a_min", c.ocp.a_min);
    get_to(o, "a_max", c.ocp.a_max);
    get_to(o, "steer_min", c.ocp.steer_min);
    get_to(o, "steer_max", c.ocp.steer_max);
    get_to(o, "dt", c.ocp.dt);
  }
  if (j.contains("collision")) {
    const json& g = j.at("collision");
    get_to(g, "num_circles", c.collision.num_circles);
    get_to(g, "radius", c.collision.radius);
    get_to(g, "length", c.collision.length);
    get_to(g, "width", c.collision.width);
  }
  if (j.contains("tree")) {
    const json& t = j.at("tree");
    get_to(t, "horizon", c.horizon);
    get_to(t, "num_modes", c.num_modes);
    get_to(t, "branch_horizon", c.branch_horizon);
    get_to(t, "timescale", c.timescale);
  }
  if (j.contains("learning")) {
    const json& l = j.at("learning");
    get_to(l, "window_length", c.window_length);
    get_to(l, "lambda", c.lambda);
    get_to(l, "ridge", c.ridge);
    if (l.contains("feature_scales")) {
      for (int i = 0; i < 4; ++i) {
        c.features.scales[i] = l.at("feature_scales").at(i).get<double>();
      }
    }
  }
  if (j.contains("episode")) {
    const json& e = j.at("episode");
    get_to(e, "sim_time", c.sim_time);
    get_pair(e, "dpx", c.dpx_min, c.dpx_max);
    get_pair(e, "dpy", c.dpy_min, c.dpy_max);
    get_to(e, "ego_px_init", c.ego_px_init);
    get_to(e, "target_py_init", c.target_py_init);
    get_pair(e, "v_init", c.v_init_min, c.v_init_max);
    get_pair(e, "np", c.np_min, c.np_max);
    get_pair(e, "c_thres", c.c_thres_min, c.c_thres_max);
    get_pair(e, "dataset_heading", c.dataset_heading_min, c.dataset_heading_max);
  }
  if (j.contains("solver")) {
    const json& s = j.at("solver");
    get_to(s, "max_iter", c.solver.max_iter);
    get_to(s, "tol_kkt", c.solver.tol_kkt);
    get_to(s, "tol_constraint", c.solver.tol_constraint);
    get_to(s, "penalty_init", c.solver.penalty_init);
    get_to(s, "penalty_max", c.solver.penalty_max);
    get_to(s, "qp_max_iter", c.solver.qp_max_iter);
    get_to(s, "qp_tol", c.solver.qp_tol);
    get_to(s, "line_search_max", c.solver.line_search_max);
    get_to(s, "bfgs_init", c.solver.bfgs_init);
  }
  return c;
}

}  // namespace

std::string ExperimentConfig::to_json() const { return to_json_obj(*this).dump(2); }

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  return from_json_obj(json::parse(text));
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open config file: " + path);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

void ExperimentConfig::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write config file: " + path);
  }
  out << to_json() << "\n";
}

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig c;
  c.ocp.sigmoid.shift = calibrate_shift(c.ocp.sigmoid.amplitude, c.ocp.sigmoid.steepness);
  // Receding-horizon settings: generous iteration budget for cold starts and
  // a feasibility-first acceptance, since warm-started resolves finish early.
  c.solver.max_iter = 100;
  c.solver.tol_kkt = 1e-4;
  return c;
}

}  // namespace lcmpc
