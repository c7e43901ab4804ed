// harvestsim: command-line front end for the tomato-harvesting cell simulator.
//
// Exit codes: 0 ok, 1 config/IO error, 2 infeasible plan endpoints,
// 3 no feasible plan found, 4 no ripe target.

#include <cstdint>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "tomharvest/commands.hpp"

namespace cli = tomharvest::cli;
namespace config = tomharvest::config;

namespace {

class NullBuffer : public std::streambuf {
 protected:
  int overflow(int c) override { return c; }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tomato-harvesting robotic cell simulator"};
  app.footer(
      "Exit codes: 0 ok, 1 config/IO error, 2 infeasible plan endpoints, 3 no feasible plan, 4 no ripe target");
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
  bool serial = false;
  app.add_option("--config", config_path, "Run configuration (JSON); built-in defaults when omitted");
  app.add_option("--seed", seed, "Override the planner and pick-cycle seeds");
  app.add_option("--out", out, "Output file (stdout when omitted)");
  app.add_flag("--quiet", quiet, "Suppress diagnostics on stderr");
  app.add_flag("--serial", serial, "Use the serial reference kernels instead of OpenMP");

  cli::TorqueCurveArgs torque;
  std::string torque_model = "printed";
  auto* torque_cmd = app.add_subcommand("torque-curve", "Motor torque vs grasp force at a fixed crank angle (CSV)");
  torque_cmd->add_option("--theta", torque.theta_deg, "Crank angle, deg")->capture_default_str();
  torque_cmd->add_option("--p-min", torque.p_min, "Smallest grasp force, N")->capture_default_str();
  torque_cmd->add_option("--p-max", torque.p_max, "Largest grasp force, N")->capture_default_str();
  torque_cmd->add_option("--steps", torque.steps, "Number of force samples")->capture_default_str();
  torque_cmd->add_option("--model", torque_model, "Torque law: printed | full")
      ->check(CLI::IsMember({"printed", "full"}))
      ->capture_default_str();

  cli::SolveMechanismArgs solve;
  auto* solve_cmd = app.add_subcommand("solve-mechanism", "Finger linkage position sweep (CSV)");
  solve_cmd->add_option("--start", solve.start_deg, "First crank angle, deg (default theta_min)");
  solve_cmd->add_option("--end", solve.end_deg, "Last crank angle, deg (default theta_max)");
  solve_cmd->add_option("--step", solve.step_deg, "Sweep step, deg")->capture_default_str();

  cli::PlanArgs plan;
  std::string plan_start, plan_goal;
  auto* plan_cmd = app.add_subcommand("plan", "PSO joint-space trajectory (JSON)");
  plan_cmd->add_option("--start", plan_start, "Start joints, comma separated rad (default plan.start or home)");
  plan_cmd->add_option("--goal", plan_goal, "Goal joints, comma separated rad (default plan.goal)");

  cli::PickStatsArgs pick;
  std::string detections, depth, trials_csv;
  std::optional<double> calibrate_to;
  auto* pick_cmd = app.add_subcommand("pick-stats", "Monte Carlo pick-cycle statistics (JSON + per-trial CSV)");
  pick_cmd->add_option("--detections", detections, "Detection records (JSON; default io.detections)");
  pick_cmd->add_option("--depth", depth, "Depth frame (DPTH binary; default io.depth)");
  pick_cmd->add_option("--trials", pick.trials, "Monte Carlo trials")->capture_default_str();
  pick_cmd->add_option("--calibrate-to", calibrate_to, "Calibrate pose noise to this success rate first");
  pick_cmd->add_option("--calibration-trials", pick.calibration_trials, "Trials per calibration evaluation")
      ->capture_default_str();
  pick_cmd->add_option("--trials-csv", trials_csv, "Per-trial CSV path (default <out stem>.trials.csv)");

  CLI11_PARSE(app, argc, argv);

  NullBuffer null_buffer;
  std::ostream null_stream(&null_buffer);
  std::ostream& log = quiet ? null_stream : std::cerr;
  const auto exec = serial ? tomharvest::Exec::kSerial : tomharvest::Exec::kParallel;

  try {
    config::RunConfig cfg = config_path.empty() ? config::parse_run_config(nlohmann::json::object())
                                                : config::load_run_config(config_path);
    if (seed) cfg.set_seed(*seed);

    if (*torque_cmd) {
      torque.out = out;
      torque.model = torque_model == "full" ? tomharvest::mechanism::TorqueModel::kFullVirtualWork
                                            : tomharvest::mechanism::TorqueModel::kPrinted;
      return cli::cmd_torque_curve(cfg, torque, log);
    }
    if (*solve_cmd) {
      solve.out = out;
      return cli::cmd_solve_mechanism(cfg, solve, log);
    }
    if (*plan_cmd) {
      plan.out = out;
      plan.exec = exec;
      if (!plan_start.empty()) plan.start = cli::parse_joint_list(plan_start);
      if (!plan_goal.empty()) plan.goal = cli::parse_joint_list(plan_goal);
      return cli::cmd_plan(cfg, plan, log);
    }
    if (*pick_cmd) {
      pick.out = out;
      pick.exec = exec;
      pick.calibrate_to = calibrate_to;
      pick.trials_csv = trials_csv;
      if (!detections.empty()) pick.detections = detections;
      if (!depth.empty()) pick.depth = depth;
      return cli::cmd_pick_stats(cfg, pick, log);
    }
  } catch (const std::exception& e) {
    log << "harvestsim: " << e.what() << '\n';
    return cli::kExitConfigOrIo;
  }
  return cli::kExitConfigOrIo;
}
