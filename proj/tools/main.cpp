#include <cstdint>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lcmpc/config.hpp"
#include "lcmpc/risk.hpp"
#include "lcmpc/scenario_tree.hpp"
#include "lcmpc/simulate.hpp"

namespace {

using namespace lcmpc;

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write " + path);
  }
  out << content;
}

ExperimentConfig load_config(const std::string& path) {
  return path.empty() ? ExperimentConfig::defaults() : ExperimentConfig::load(path);
}

/// Offline-fitted prior; deterministic in (config, seed).
IntentModel make_prior(const ExperimentConfig& config, const std::string& prior_path,
                       std::uint64_t seed) {
  if (!prior_path.empty()) {
    return IntentModel::load(prior_path);
  }
  const Dataset data = generate_offline_dataset(config, 800, 200, 10, seed ^ 0x0ff1ce);
  return fit_offline(data.train, config.features, config.ridge);
}

int cmd_episode(const ExperimentConfig& config, const std::string& variant_tag,
                std::uint64_t seed, int index, const std::string& prior_path,
                const std::string& out_path) {
  const EstimatorVariant variant = parse_variant(variant_tag);
  const IntentModel prior = make_prior(config, prior_path, seed);
  const EpisodeSetup setup = sample_episode(config, seed, index);
  const EpisodeResult result = run_episode(config, setup, variant, prior);
  const std::string log = episode_jsonl(setup, variant, result);
  if (out_path.empty()) {
    std::cout << log;
  } else {
    write_file(out_path, log);
  }
  std::cout << "outcome=" << to_string(result.outcome)
            << " cost=" << result.closed_loop_cost
            << " solver_failures=" << result.solver_failures << "\n";
  return result.outcome == Outcome::kCollision ? 1 : 0;
}

int cmd_study(const ExperimentConfig& config, int episodes, std::uint64_t seed,
              std::vector<std::string> variant_tags, const std::string& prior_path,
              int workers, const std::string& out_path) {
  if (variant_tags.empty()) {
    for (const EstimatorVariant v : kAllVariants) variant_tags.push_back(to_string(v));
  }
  std::vector<EstimatorVariant> variants;
  for (const std::string& tag : variant_tags) variants.push_back(parse_variant(tag));
  const IntentModel prior = make_prior(config, prior_path, seed);
  const StudyResult study = run_study(config, episodes, seed, variants, prior, workers);
  const std::string csv = study_csv(study);
  if (!out_path.empty()) write_file(out_path, csv);
  std::cout << csv;
  int collisions = 0;
  for (const VariantSummary& s : study.summaries) collisions += s.collision;
  return collisions > 0 ? 1 : 0;
}

int cmd_dataset(const ExperimentConfig& config, int n_train, int n_val, int n_drivers,
                std::uint64_t seed, const std::string& train_path,
                const std::string& val_path) {
  const Dataset data = generate_offline_dataset(config, n_train, n_val, n_drivers, seed);
  write_file(train_path, dataset_csv(data.train));
  write_file(val_path, dataset_csv(data.validation));
  std::cout << "train=" << data.train.size() << " validation=" << data.validation.size()
            << " drivers=" << data.drivers.size() << "\n";
  return 0;
}

int cmd_fit(const ExperimentConfig& config, const std::string& train_path,
            const std::string& val_path, double ridge, const std::string& model_path) {
  std::ifstream in(train_path);
  if (!in) throw std::runtime_error("cannot read " + train_path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::vector<Observation> train = dataset_from_csv(text);
  const IntentModel model = fit_offline(train, config.features, ridge);
  if (!model_path.empty()) model.save(model_path);
  std::cout << "train_misclassification=" << misclassification(model, train) << "\n";
  if (!val_path.empty()) {
    std::ifstream vin(val_path);
    if (!vin) throw std::runtime_error("cannot read " + val_path);
    std::string vtext((std::istreambuf_iterator<char>(vin)),
                      std::istreambuf_iterator<char>());
    const std::vector<Observation> val = dataset_from_csv(vtext);
    std::cout << "validation_misclassification=" << misclassification(model, val) << "\n";
  }
  return 0;
}

int cmd_example1(const std::string& out_path) {
  // Four outcomes uniformly spaced on [-5, 2] with a light upper tail.
  DiscreteRandomQuantity q;
  q.outcomes = Eigen::VectorXd::LinSpaced(4, -5.0, 2.0);
  q.probs.resize(4);
  q.probs << 0.6, 0.3, 0.08, 0.02;
  const double gamma = 0.05;

  SigmoidParams sig{1.33, 10.0, 0.0};
  sig.shift = calibrate_shift(sig.amplitude, sig.steepness);

  const double exact = exact_violation(q);
  const AvarEstimate avar = violation_estimate_avar(q, gamma);
  const double smooth = violation_estimate_sigmoid(q, sig);

  std::cout << "exact_violation=" << exact << "\n";
  std::cout << "avar_estimate=" << avar.estimate << " (t*=" << avar.t_star
            << ", c*=" << avar.c_star << ")\n";
  std::cout << "sigmoid_estimate=" << smooth << " (shift=" << sig.shift << ")\n";

  if (!out_path.empty()) {
    // Indicator vs the two surrogates on a grid, for plotting.
    std::ostringstream csv;
    csv << "x,indicator,sigmoid,avar_affine\n";
    for (int i = 0; i <= 700; ++i) {
      const double x = -5.0 + i * 0.01;
      const double ind = x > 0.0 ? 1.0 : 0.0;
      const double aff = std::max(0.0, 1.0 + avar.c_star * x);
      csv << x << ',' << ind << ',' << sigmoid(x, sig) << ',' << aff << "\n";
    }
    write_file(out_path, csv.str());
  }
  return 0;
}

/// Quick self-checks: tree probability normalization, surrogate soundness,
/// and a finite-difference audit of the assembled OCP derivatives.
int cmd_check(const ExperimentConfig& config, std::uint64_t seed) {
  int failures = 0;
  std::mt19937_64 rng(seed);
  const auto report = [&](const char* name, bool ok) {
    std::cout << (ok ? "ok   " : "FAIL ") << name << "\n";
    if (!ok) ++failures;
  };

  {
    bool ok = true;
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 50 && ok; ++trial) {
      const TreeTopology topo = TreeTopology::build(6, 2, 4, 2);
      IntentModel model = IntentModel::zero(config.features);
      for (int i = 0; i < model.theta.size(); ++i) model.theta.data()[i] = u(rng);
      JointState joint;
      joint.ego = {6.0, 0.0, 24.0, 0.0};
      joint.target = {4.0 + u(rng), 4.0, 24.0 + u(rng), 0.0};
      const Eigen::VectorXd controls =
          Eigen::VectorXd::Zero(2 * topo.num_nonleaf());
      const auto traj = rollout(topo, joint, controls, config.nominal_target,
                                config.geometry, config.ocp.dt);
      const Eigen::VectorXd probs = path_probabilities(traj, topo, model);
      ok = std::abs(probs.sum() - 1.0) < 1e-10 && probs.minCoeff() > 0.0;
    }
    report("leaf probabilities normalized", ok);
  }

  {
    bool ok = true;
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    SigmoidParams sig{1.2, 10.0, calibrate_shift(1.2, 10.0)};
    for (int trial = 0; trial < 200 && ok; ++trial) {
      DiscreteRandomQuantity q;
      q.outcomes.resize(4);
      q.probs.resize(4);
      double sum = 0.0;
      for (int i = 0; i < 4; ++i) {
        q.outcomes[i] = u(rng);
        q.probs[i] = 0.05 + std::abs(u(rng));
        sum += q.probs[i];
      }
      q.probs /= sum;
      ok = violation_estimate_sigmoid(q, sig) >= exact_violation(q) - 1e-12;
    }
    report("sigmoid estimate bounds exact violation", ok);
  }

  {
    // Central finite differences on the assembled problem at a random
    // interior point.
    IntentModel model = IntentModel::zero(config.features);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (int i = 0; i < model.theta.size(); ++i) model.theta.data()[i] = u(rng);
    const JointState root{{6.0, 0.0, 24.0, 0.0}, {3.0, 4.0, 24.0, 0.0}};
    const OcpData data{TreeTopology::build(config.horizon, config.num_modes,
                                           config.branch_horizon, config.timescale),
                       root,
                       {0.0, 0.0},
                       ModeDistribution::logistic(model),
                       config.ocp,
                       config.weights,
                       config.collision,
                       config.nominal_target,
                       config.geometry};
    const NlpProblem problem = assemble(data);

    Eigen::VectorXd x(problem.num_vars);
    for (int i = 0; i < x.size(); ++i) x[i] = u(rng);
    Eigen::VectorXd grad(problem.num_vars);
    const double f0 = problem.objective(x, &grad);
    (void)f0;
    double max_err = 0.0;
    const double h = 1e-6;
    for (int i = 0; i < std::min<int>(20, problem.num_vars); ++i) {
      Eigen::VectorXd xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      const double fd =
          (problem.objective(xp, nullptr) - problem.objective(xm, nullptr)) / (2 * h);
      max_err = std::max(max_err,
                         std::abs(fd - grad[i]) / (1.0 + std::abs(fd)));
    }
    report("objective gradient matches finite differences", max_err < 1e-5);
  }

  std::cout << (failures == 0 ? "all checks passed\n" : "checks FAILED\n");
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interaction-aware stochastic MPC for highway lane changes"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "JSON configuration file")
      ->check(CLI::ExistingFile);

  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "master random seed");

  auto* ep = app.add_subcommand("episode", "run one closed-loop episode");
  std::string variant_tag = "MAP";
  int index = 0;
  std::string prior_path, out_path;
  ep->add_option("--variant", variant_tag, "MLE|MAP|PRIOR|EMP|UNI|BRA|TRA");
  ep->add_option("--index", index, "episode index under the master seed");
  ep->add_option("--prior", prior_path, "intent model JSON (default: fit internally)");
  ep->add_option("--out", out_path, "JSONL log path (default: stdout)");

  auto* st = app.add_subcommand("study", "paired multi-variant study");
  int episodes = 50, workers = 0;
  std::vector<std::string> variant_tags;
  std::string study_out;
  st->add_option("--episodes", episodes, "episodes per variant");
  st->add_option("--variants", variant_tags, "subset of variants (default: all)");
  st->add_option("--prior", prior_path, "intent model JSON (default: fit internally)");
  st->add_option("--workers", workers, "parallel episodes (0 = hardware)");
  st->add_option("--out", study_out, "summary CSV path");

  auto* ds = app.add_subcommand("dataset", "generate an offline labeled dataset");
  int n_train = 800, n_val = 200, n_drivers = 10;
  std::string train_path = "train.csv", val_path = "validation.csv";
  ds->add_option("--train-count", n_train, "training points");
  ds->add_option("--val-count", n_val, "validation points");
  ds->add_option("--drivers", n_drivers, "distinct drivers");
  ds->add_option("--train-out", train_path, "training CSV path");
  ds->add_option("--val-out", val_path, "validation CSV path");

  auto* ft = app.add_subcommand("fit", "offline logistic fit");
  std::string fit_train = "train.csv", fit_val, model_out = "model.json";
  double ridge = 1e-3;
  ft->add_option("--train", fit_train, "training CSV")->check(CLI::ExistingFile);
  ft->add_option("--val", fit_val, "validation CSV")->check(CLI::ExistingFile);
  ft->add_option("--ridge", ridge, "ridge weight");
  ft->add_option("--model-out", model_out, "model JSON path");

  auto* ex = app.add_subcommand("example1", "risk surrogate comparison");
  std::string ex_out;
  ex->add_option("--out", ex_out, "surrogate curve CSV path");

  auto* ck = app.add_subcommand("check", "quick invariant and gradient checks");

  CLI11_PARSE(app, argc, argv);

  try {
    const ExperimentConfig config = load_config(config_path);
    if (app.got_subcommand(ep)) {
      return cmd_episode(config, variant_tag, seed, index, prior_path, out_path);
    }
    if (app.got_subcommand(st)) {
      return cmd_study(config, episodes, seed, variant_tags, prior_path, workers,
                       study_out);
    }
    if (app.got_subcommand(ds)) {
      return cmd_dataset(config, n_train, n_val, n_drivers, seed, train_path, val_path);
    }
    if (app.got_subcommand(ft)) {
      return cmd_fit(config, fit_train, fit_val, ridge, model_out);
    }
    if (app.got_subcommand(ex)) {
      return cmd_example1(ex_out);
    }
    if (app.got_subcommand(ck)) {
      return cmd_check(config, seed == 0 ? 42 : seed);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
