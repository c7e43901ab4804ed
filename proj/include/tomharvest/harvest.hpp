#pragma once

// Six-stage pick cycle (approach, separate, cut, grasp, depart, release) and
// its Monte Carlo evaluation.
//
// A cycle splits into a deterministic part (IK and trajectory planning, which
// depend only on the target, scene and planner seed) and a stochastic part
// (stage durations and the gripper pose error at the cut). prepare_cycle()
// computes the former once; simulate_cycle() draws the latter per trial.

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tomharvest/arm.hpp"
#include "tomharvest/common.hpp"
#include "tomharvest/mechanism.hpp"
#include "tomharvest/perception.hpp"
#include "tomharvest/planner.hpp"

namespace tomharvest::harvest {

enum class Stage { kApproach, kSeparate, kCut, kGrasp, kDepart, kRelease };
inline constexpr std::array<Stage, 6> kStages = {Stage::kApproach, Stage::kSeparate, Stage::kCut,
                                                 Stage::kGrasp,    Stage::kDepart,   Stage::kRelease};

enum class Outcome { kSuccess, kFailCutMissed, kFailNoPlan, kFailUnreachable };
inline constexpr std::array<Outcome, 4> kOutcomes = {Outcome::kSuccess, Outcome::kFailCutMissed,
                                                     Outcome::kFailNoPlan, Outcome::kFailUnreachable};

using StageMap = std::map<Stage, double>;

/// Shipped per-stage mean durations in seconds; they sum to 24.34 s.
StageMap default_stage_means();

/// Default home and punnet configurations for the default chain.
arm::JointVector default_home();
arm::JointVector default_punnet();

struct PickCycleConfig {
  StageMap stage_time_means = default_stage_means();
  double stage_time_stddev_frac = 0.1;
  double pose_noise_sigma = 0.005;      // m, isotropic gripper position error at the cut
  double cut_zone_radius = 0.012;       // m
  double cut_trigger_distance = 0.004;  // m, cutter-to-pedicel distance that fires the cutter
  double insertion_depth = 0.03;        // m, advance during separation
  double standoff = 0.08;               // m, pre-grasp distance from the tomato centre
  double grasp_force = 5.0;             // N per finger
  double grasp_theta_deg = 60.0;
  mechanism::MechanismParams gripper;
  mechanism::Branch gripper_branch = mechanism::Branch::kElbowUp;
  arm::IkOptions ik;
  arm::JointVector home = default_home();
  arm::JointVector punnet = default_punnet();
  std::uint64_t seed = 7;

  void validate(const arm::KinematicChain& chain) const;
};

class CalibrationFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Deterministic part of a pick cycle.
struct CyclePlan {
  Outcome deterministic_failure = Outcome::kSuccess;
  std::optional<Stage> failed_stage;  // first stage that cannot execute, if any
  std::string failure_detail;

  Eigen::Vector3d approach_dir = Eigen::Vector3d::UnitZ();  // unit, pedicel side of the tomato
  Eigen::Vector3d pedicel = Eigen::Vector3d::Zero();
  Eigen::Vector3d nominal_cut_center = Eigen::Vector3d::Zero();
  arm::JointVector pregrasp_q;
  arm::JointVector insert_q;
  std::shared_ptr<const planner::Trajectory> approach;
  std::shared_ptr<const planner::Trajectory> depart;
  mechanism::TorqueResult grasp_torque;
};

struct PickCycleReport {
  StageMap stage_timings;  // executed stages only
  double total_time = 0.0;
  Outcome outcome = Outcome::kSuccess;
  double pedicel_miss_distance = 0.0;  // m, 0 when the cut was never attempted
  bool cut_attempted = false;
  double grasp_torque_total = 0.0;  // N*mm, recorded when the grasp stage runs
  std::shared_ptr<const planner::Trajectory> trajectory_used;
};

struct StageStats {
  int count = 0;
  double mean = 0.0;
  double stddev = 0.0;
};

struct MonteCarloSummary {
  int trials = 0;
  double success_rate = 0.0;
  std::map<Outcome, int> outcome_counts;
  double total_time_mean = 0.0;    // over successful trials
  double total_time_stddev = 0.0;  // sample standard deviation
  std::map<Stage, StageStats> stage_stats;  // over trials that executed the stage
};

struct MonteCarloRun {
  MonteCarloSummary summary;
  std::vector<PickCycleReport> reports;
};

/// IK and planning for one target. Never throws for reachability or
/// planning problems; they are recorded as the deterministic failure.
/// Throws ConfigError for invalid configuration.
CyclePlan prepare_cycle(const perception::TargetTomato& target, const arm::KinematicChain& chain,
                        const planner::Scene& scene, const planner::PsoConfig& pso, const PickCycleConfig& cfg);

/// Runs the stochastic part of one cycle. Deterministic given trial_seed.
PickCycleReport simulate_cycle(const CyclePlan& plan, const PickCycleConfig& cfg, std::uint64_t trial_seed);

PickCycleReport run_pick_cycle(const perception::TargetTomato& target, const arm::KinematicChain& chain,
                               const planner::Scene& scene, const planner::PsoConfig& pso,
                               const PickCycleConfig& cfg, std::uint64_t trial_seed);

/// Trial i uses trial_seed = cfg.seed + i. Results are identical for both
/// execution policies.
MonteCarloRun monte_carlo(const CyclePlan& plan, const PickCycleConfig& cfg, int trials, Exec exec = Exec::kParallel);

MonteCarloRun monte_carlo(const perception::TargetTomato& target, const arm::KinematicChain& chain,
                          const planner::Scene& scene, const planner::PsoConfig& pso, const PickCycleConfig& cfg,
                          int trials, Exec exec = Exec::kParallel);

MonteCarloSummary summarize(const std::vector<PickCycleReport>& reports);

/// Bisection on pose_noise_sigma over [0, 5 * cut_zone_radius] until the
/// success rate on the common seed set {seed, ..., seed + trials_per_eval - 1}
/// is within `tolerance` of target_rate, or 40 halvings.
/// Throws CalibrationFailed when the bracket does not straddle target_rate.
double calibrate_noise(const CyclePlan& plan, const PickCycleConfig& cfg, double target_rate, int trials_per_eval,
                       double tolerance = 0.02);

double calibrate_noise(const perception::TargetTomato& target, const arm::KinematicChain& chain,
                       const planner::Scene& scene, const planner::PsoConfig& pso, const PickCycleConfig& cfg,
                       double target_rate, int trials_per_eval, double tolerance = 0.02);

std::string to_string(Stage s);
std::string to_string(Outcome o);
Stage stage_from_string(const std::string& name);

}  // namespace tomharvest::harvest
