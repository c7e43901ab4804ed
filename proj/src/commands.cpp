#include "tomharvest/commands.hpp"

#include <fmt/format.h>
#include <fstream>
#include <iostream>
#include <sstream>

namespace tomharvest::cli {

using nlohmann::json;

namespace {

// Writes through a sibling temporary so readers never observe a half-written file.
void write_output(const std::filesystem::path& path, const std::string& content) {
  if (path.empty()) {
    std::cout << content;
    std::cout.flush();
    return;
  }
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
    out << content;
    if (!out) throw std::runtime_error(fmt::format("write to {} failed", path.string()));
  }
  std::filesystem::rename(tmp, path);
}

std::string opt_number(bool present, double v) { return present ? format_number(v) : std::string{}; }

json joint_json(const arm::JointVector& q) {
  json a = json::array();
  for (Eigen::Index i = 0; i < q.size(); ++i) a.push_back(q[i]);
  return a;
}

json vec_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

json trajectory_json(const planner::PlanResult& result, std::uint64_t seed) {
  const auto& t = result.trajectory;
  json wps = json::array();
  for (const auto& w : t.waypoints) wps.push_back(joint_json(w));
  return {{"seed", seed},
          {"feasible", t.feasible},
          {"fitness", t.fitness},
          {"breakdown",
           {{"path_length", t.breakdown.path_length},
            {"collision_penalty", t.breakdown.collision_penalty},
            {"limit_penalty", t.breakdown.limit_penalty},
            {"colliding_samples", t.breakdown.colliding_samples}}},
          {"waypoints", wps},
          {"trace", result.trace}};
}

}  // namespace

std::string format_number(double v) { return fmt::format("{}", v); }

arm::JointVector parse_joint_list(const std::string& text) {
  std::vector<double> vals;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      vals.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("cannot parse joint value '{}' in '{}'", item, text));
    }
  }
  arm::JointVector q(static_cast<Eigen::Index>(vals.size()));
  for (std::size_t i = 0; i < vals.size(); ++i) q[static_cast<Eigen::Index>(i)] = vals[i];
  return q;
}

int cmd_torque_curve(const config::RunConfig& cfg, const TorqueCurveArgs& args, std::ostream& log) {
  std::vector<mechanism::TorqueResult> curve;
  try {
    curve = mechanism::force_torque_curve(cfg.mechanism, args.theta_deg, args.p_min, args.p_max, args.steps,
                                          cfg.branch, args.model);
  } catch (const mechanism::MechanismError& e) {
    log << "torque-curve: " << e.what() << '\n';
    return kExitConfigOrIo;
  }
  std::string csv = "theta_deg,force_N,xi_deg,dxi_dtheta,torque_single_Nmm,torque_total_Nmm\n";
  for (const auto& r : curve) {
    csv += fmt::format("{},{},{},{},{},{}\n", format_number(r.theta), format_number(r.force_p), format_number(r.xi),
                       format_number(r.dxi_dtheta), format_number(r.torque_single), format_number(r.torque_total));
  }
  write_output(args.out, csv);
  return kExitOk;
}

int cmd_solve_mechanism(const config::RunConfig& cfg, const SolveMechanismArgs& args, std::ostream& log) {
  const double start = args.start_deg.value_or(cfg.mechanism.theta_min_deg);
  const double end = args.end_deg.value_or(cfg.mechanism.theta_max_deg);
  std::vector<mechanism::SweepSample> sweep;
  try {
    sweep = mechanism::sweep_positions(cfg.mechanism, start, end, args.step_deg, cfg.branch);
  } catch (const mechanism::MechanismError& e) {
    log << "solve-mechanism: " << e.what() << '\n';
    return kExitConfigOrIo;
  }
  std::string csv = "theta_deg,status,beta_deg,xi_deg,k_mm,u_deg,x_m_mm,y_m_mm,closure_residual_mm,gamma_deg\n";
  int solved = 0;
  for (const auto& s : sweep) {
    if (s.solution) {
      ++solved;
      const auto& f = *s.solution;
      csv += fmt::format("{},ok,{},{},{},{},{},{},{},{}\n", format_number(s.theta), format_number(f.beta),
                         format_number(f.xi), format_number(f.k), format_number(f.u), format_number(f.x_m),
                         format_number(f.y_m), format_number(s.residual_norm), format_number(s.gamma_deg));
    } else {
      csv += fmt::format("{},no_assembly,,,,,,,,\n", format_number(s.theta));
    }
  }
  if (solved == 0) {
    log << "solve-mechanism: the linkage does not assemble anywhere in the sweep\n";
    return kExitConfigOrIo;
  }
  write_output(args.out, csv);
  return kExitOk;
}

int cmd_plan(const config::RunConfig& cfg, const PlanArgs& args, std::ostream& log) {
  const arm::JointVector start = args.start.value_or(cfg.plan_start.value_or(cfg.pick_cycle.home));
  if (!args.goal && !cfg.plan_goal) {
    log << "plan: no goal given (use --goal or plan.goal in the config)\n";
    return kExitConfigOrIo;
  }
  const arm::JointVector goal = args.goal ? *args.goal : *cfg.plan_goal;
  if (start.size() != cfg.chain.dof() || goal.size() != cfg.chain.dof()) {
    log << fmt::format("plan: start/goal need {} joint values\n", cfg.chain.dof());
    return kExitConfigOrIo;
  }
  try {
    const planner::PlanResult result = planner::plan_trajectory(cfg.chain, start, goal, cfg.scene, cfg.pso, args.exec);
    write_output(args.out, trajectory_json(result, cfg.pso.seed).dump(2) + "\n");
    return kExitOk;
  } catch (const planner::PlanError& e) {
    log << "plan: " << e.what() << '\n';
    switch (e.kind()) {
      case planner::PlanError::Kind::kInfeasibleEndpoints:
        return kExitInfeasibleEndpoints;
      case planner::PlanError::Kind::kNoFeasibleFound:
        write_output(args.out, trajectory_json(e.best(), cfg.pso.seed).dump(2) + "\n");
        return kExitNoFeasiblePlan;
      case planner::PlanError::Kind::kDimensionMismatch:
        return kExitConfigOrIo;
    }
  }
  return kExitConfigOrIo;
}

int cmd_pick_stats(const config::RunConfig& cfg, const PickStatsArgs& args, std::ostream& log) {
  const auto det_path = args.detections ? args.detections : cfg.detections_path;
  const auto depth_path = args.depth ? args.depth : cfg.depth_path;
  if (!det_path || !depth_path) {
    log << "pick-stats: detections and depth files are required (flags or io section)\n";
    return kExitConfigOrIo;
  }
  if (args.trials < 1 || args.calibration_trials < 1) {
    log << "pick-stats: trial counts must be >= 1\n";
    return kExitConfigOrIo;
  }

  perception::TargetTomato target;
  try {
    const auto records = perception::load_detections(*det_path, std::pair{cfg.camera.width, cfg.camera.height});
    const auto depth = perception::load_depth_frame(*depth_path);
    target = perception::select_target(records, cfg.camera, depth, cfg.policy, cfg.target_options);
  } catch (const perception::PerceptionError& e) {
    log << "pick-stats: " << e.what() << '\n';
    return e.kind() == perception::PerceptionError::Kind::kNoRipeTarget ? kExitNoRipeTarget : kExitConfigOrIo;
  }

  harvest::PickCycleConfig cycle = cfg.pick_cycle;
  const harvest::CyclePlan plan = harvest::prepare_cycle(target, cfg.chain, cfg.scene, cfg.pso, cycle);
  if (plan.failed_stage) log << "pick-stats: every cycle fails deterministically: " << plan.failure_detail << '\n';

  bool calibrated = false;
  if (args.calibrate_to) {
    try {
      cycle.pose_noise_sigma = harvest::calibrate_noise(plan, cycle, *args.calibrate_to, args.calibration_trials);
    } catch (const harvest::CalibrationFailed& e) {
      log << "pick-stats: " << e.what() << '\n';
      return kExitConfigOrIo;
    } catch (const ConfigError& e) {
      log << "pick-stats: " << e.what() << '\n';
      return kExitConfigOrIo;
    }
    // Evaluate on seeds disjoint from the calibration set.
    cycle.seed += static_cast<std::uint64_t>(args.calibration_trials);
    calibrated = true;
  }

  const harvest::MonteCarloRun run = harvest::monte_carlo(plan, cycle, args.trials, args.exec);
  const auto& s = run.summary;

  json outcomes = json::object();
  for (const auto& [o, n] : s.outcome_counts) outcomes[harvest::to_string(o)] = n;
  json stages = json::object();
  for (const auto& [st, stats] : s.stage_stats) {
    stages[harvest::to_string(st)] = {{"count", stats.count}, {"mean", stats.mean}, {"stddev", stats.stddev}};
  }
  const json summary = {
      {"trials", s.trials},
      {"success_rate", s.success_rate},
      {"outcome_counts", outcomes},
      {"total_time", {{"mean", s.total_time_mean}, {"stddev", s.total_time_stddev}}},
      {"stages", stages},
      {"pose_noise_sigma", cycle.pose_noise_sigma},
      {"calibrated", calibrated},
      {"first_trial_seed", cycle.seed},
      {"grasp_torque_total_Nmm", plan.grasp_torque.torque_total},
      {"target",
       {{"center", vec_json(target.center_3d)},
        {"pedicel", vec_json(target.pedicel_3d)},
        {"estimated_radius", target.estimated_radius},
        {"source_index", target.source_index}}}};

  std::string csv = "trial,outcome";
  for (auto st : harvest::kStages) csv += "," + harvest::to_string(st) + "_s";
  csv += ",total_s,miss_distance_m\n";
  for (std::size_t i = 0; i < run.reports.size(); ++i) {
    const auto& r = run.reports[i];
    csv += fmt::format("{},{}", i, harvest::to_string(r.outcome));
    for (auto st : harvest::kStages) {
      const auto it = r.stage_timings.find(st);
      csv += "," + opt_number(it != r.stage_timings.end(), it != r.stage_timings.end() ? it->second : 0.0);
    }
    csv += fmt::format(",{},{}\n", format_number(r.total_time), opt_number(r.cut_attempted, r.pedicel_miss_distance));
  }

  std::filesystem::path csv_path = args.trials_csv;
  if (csv_path.empty() && !args.out.empty()) {
    csv_path = args.out;
    csv_path.replace_extension(".trials.csv");
  }
  write_output(args.out, summary.dump(2) + "\n");
  if (!csv_path.empty()) write_output(csv_path, csv);
  return kExitOk;
}

}  // namespace tomharvest::cli
