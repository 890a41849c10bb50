#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lcmpc/config.hpp"
#include "lcmpc/intent.hpp"
#include "lcmpc/nlp_solver.hpp"
#include "lcmpc/ocp.hpp"

namespace lcmpc {

/// The seven compared planners. MLE/MAP run the moving-horizon logistic
/// update online (from a zero and from the offline-fitted parameter,
/// respectively); PRIOR uses the offline fit frozen; EMP substitutes the
/// running empirical maneuver frequencies; UNI/BRA/TRA use the fixed
/// distributions (0.5, 0.5), (1, 0) and (0, 1).
enum class EstimatorVariant { kMle, kMap, kPrior, kEmp, kUni, kBra, kTra };

inline constexpr std::array<EstimatorVariant, 7> kAllVariants = {
    EstimatorVariant::kMle, EstimatorVariant::kMap, EstimatorVariant::kPrior,
    EstimatorVariant::kEmp, EstimatorVariant::kUni, EstimatorVariant::kBra,
    EstimatorVariant::kTra};

const char* to_string(EstimatorVariant variant);
/// Accepts the upper-case tags (MLE, MAP, PRIOR, EMP, UNI, BRA, TRA); throws
/// std::invalid_argument otherwise.
EstimatorVariant parse_variant(const std::string& tag);

enum class Outcome { kCollision, kFront, kBehind, kTimeOut };
const char* to_string(Outcome outcome);

/// Initial joint state plus the ground-truth driver parameters of one
/// episode. Shared across variants (common random numbers).
struct EpisodeSetup {
  JointState init;
  TargetParams driver;
  std::uint64_t seed{0};
};

/// Deterministic episode randomization: the same (master_seed, index) always
/// produces the same setup, independent of how many episodes are drawn.
EpisodeSetup sample_episode(const ExperimentConfig& config, std::uint64_t master_seed,
                            int index);

struct StepLog {
  int step{0};
  JointState state;            // joint state the step started from
  ControlInput input;          // ego input actually applied
  Maneuver target_mode{};      // ground-truth P-IDM decision
  Maneuver label{};            // maneuver label fed to the learners
  Eigen::VectorXd mode_probs;  // planner distribution at this state
  SolveStatus solver_status{SolveStatus::kMaxIter};
  int solver_iterations{0};
  double solver_violation{0.0};
  std::string solver_diagnostic;
  bool fallback{false};  // true when the slew-limited ramp-down was applied
  double stage_cost{0.0};
};

struct EpisodeResult {
  Outcome outcome{Outcome::kTimeOut};
  double closed_loop_cost{0.0};
  int solver_failures{0};
  std::vector<StepLog> steps;
  Eigen::MatrixXd final_theta;  // empty for the fixed-distribution variants
};

/// Exact oriented-box overlap (separating-axis test on the two footprints).
/// Touching boxes do not count as overlapping.
bool box_overlap(const VehicleState& a, const VehicleState& b, const VehicleGeometry& geom);

/// Closed-loop episode: per step the ground-truth driver decides via P-IDM,
/// the variant's estimator is updated with the labeled observation, the tree
/// OCP is solved (warm-started; re-solved from zero on failure; the previous
/// input, slew-clipped, is applied if both fail) and both vehicles advance.
/// The episode always runs the full horizon unless a collision occurs.
EpisodeResult run_episode(const ExperimentConfig& config, const EpisodeSetup& setup,
                          EstimatorVariant variant, const IntentModel& prior);

struct VariantSummary {
  EstimatorVariant variant{};
  int collision{0};
  int front{0};
  int behind{0};
  int timeout{0};
  double mean_cost{0.0};
  double q3_cost{0.0};  // third quartile, linear interpolation
};

struct StudyResult {
  std::vector<VariantSummary> summaries;
  // costs[v][i]: closed-loop cost of variant v on episode i (paired episodes).
  std::vector<std::vector<double>> costs;
};

/// Paired study: episode i uses the identical setup for every variant.
/// Episodes run in parallel (num_workers <= 0 picks the hardware count);
/// results are collected in episode order, so the report is deterministic.
StudyResult run_study(const ExperimentConfig& config, int num_episodes,
                      std::uint64_t master_seed,
                      std::span<const EstimatorVariant> variants, const IntentModel& prior,
                      int num_workers = 0);

std::string study_csv(const StudyResult& study);

/// Episode log as JSON lines: one header line (setup, outcome, totals)
/// followed by one line per step.
std::string episode_jsonl(const EpisodeSetup& setup, EstimatorVariant variant,
                          const EpisodeResult& result);

struct Dataset {
  std::vector<Observation> train;
  std::vector<Observation> validation;
  std::vector<TargetParams> drivers;
};

/// Labeled (joint state, maneuver) pairs from randomized states and P-IDM
/// drivers with sampled (np, c_thres); drivers are assigned round-robin so
/// each appears in both splits.
Dataset generate_offline_dataset(const ExperimentConfig& config, int num_train,
                                 int num_validation, int num_drivers,
                                 std::uint64_t seed);

std::string dataset_csv(std::span<const Observation> data);
std::vector<Observation> dataset_from_csv(const std::string& text);

/// Fraction of observations whose most likely predicted maneuver differs
/// from the label.
double misclassification(const IntentModel& model, std::span<const Observation> data);

}  // namespace lcmpc
