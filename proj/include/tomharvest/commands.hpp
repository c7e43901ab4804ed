#pragma once

// Subcommand implementations behind the harvestsim executable. Each command
// computes its whole output in memory before touching the output path, so a
// failing run never leaves a partial file behind.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "tomharvest/config.hpp"

namespace tomharvest::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfigOrIo = 1,
  kExitInfeasibleEndpoints = 2,
  kExitNoFeasiblePlan = 3,
  kExitNoRipeTarget = 4,
};

struct TorqueCurveArgs {
  double theta_deg = 45.0;
  double p_min = 0.0;
  double p_max = 20.0;
  int steps = 21;
  mechanism::TorqueModel model = mechanism::TorqueModel::kPrinted;
  std::filesystem::path out;  // empty: stdout
};

struct SolveMechanismArgs {
  std::optional<double> start_deg;  // defaults to the configured theta range
  std::optional<double> end_deg;
  double step_deg = 1.0;
  std::filesystem::path out;
};

struct PlanArgs {
  std::optional<arm::JointVector> start;  // falls back to plan.start, then pick_cycle.home
  std::optional<arm::JointVector> goal;   // falls back to plan.goal
  std::filesystem::path out;
  Exec exec = Exec::kParallel;
};

struct PickStatsArgs {
  std::optional<std::filesystem::path> detections;  // falls back to io.detections
  std::optional<std::filesystem::path> depth;       // falls back to io.depth
  int trials = 1000;
  std::optional<double> calibrate_to;  // calibrate pose noise to this success rate first
  int calibration_trials = 2000;
  std::filesystem::path out;         // summary JSON, empty: stdout
  std::filesystem::path trials_csv;  // empty: derived from out, skipped for stdout
  Exec exec = Exec::kParallel;
};

int cmd_torque_curve(const config::RunConfig& cfg, const TorqueCurveArgs& args, std::ostream& log);
int cmd_solve_mechanism(const config::RunConfig& cfg, const SolveMechanismArgs& args, std::ostream& log);
int cmd_plan(const config::RunConfig& cfg, const PlanArgs& args, std::ostream& log);
int cmd_pick_stats(const config::RunConfig& cfg, const PickStatsArgs& args, std::ostream& log);

/// Shortest round-trip decimal form used in every CSV/JSON number.
std::string format_number(double v);

/// Parses "a,b,c" into a joint vector.
arm::JointVector parse_joint_list(const std::string& text);

}  // namespace tomharvest::cli
