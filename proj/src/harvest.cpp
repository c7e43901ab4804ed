#include "tomharvest/harvest.hpp"

#include <cmath>
#include <fmt/format.h>
#include <random>

namespace tomharvest::harvest {

StageMap default_stage_means() {
  return {{Stage::kApproach, 6.0}, {Stage::kSeparate, 3.5}, {Stage::kCut, 2.5},
          {Stage::kGrasp, 3.0},    {Stage::kDepart, 6.0},   {Stage::kRelease, 3.34}};
}

arm::JointVector default_home() {
  arm::JointVector q(5);
  q << 0.0, -1.1, 1.3, 0.0, 0.0;
  return q;
}

arm::JointVector default_punnet() {
  arm::JointVector q(5);
  q << 1.4, -0.3, 0.9, 0.9, 0.0;
  return q;
}

void PickCycleConfig::validate(const arm::KinematicChain& chain) const {
  for (Stage s : kStages) {
    const auto it = stage_time_means.find(s);
    if (it == stage_time_means.end()) {
      throw ConfigError(fmt::format("pick_cycle.stage_time_means lacks stage '{}'", to_string(s)));
    }
    if (!(it->second > 0.0 && std::isfinite(it->second))) {
      throw ConfigError(fmt::format("pick_cycle mean time of stage '{}' must be > 0", to_string(s)));
    }
  }
  if (!(stage_time_stddev_frac >= 0.0 && stage_time_stddev_frac < 1.0)) {
    throw ConfigError("pick_cycle.stage_time_stddev_frac must lie in [0, 1)");
  }
  if (!(pose_noise_sigma >= 0.0 && std::isfinite(pose_noise_sigma))) {
    throw ConfigError("pick_cycle.pose_noise_sigma must be >= 0");
  }
  if (!(cut_zone_radius > 0.0)) throw ConfigError("pick_cycle.cut_zone_radius must be > 0");
  if (!(cut_trigger_distance >= 0.0)) throw ConfigError("pick_cycle.cut_trigger_distance must be >= 0");
  if (!(insertion_depth >= 0.0)) throw ConfigError("pick_cycle.insertion_depth must be >= 0");
  if (!(standoff >= insertion_depth)) throw ConfigError("pick_cycle.standoff must be >= insertion_depth");
  if (!(grasp_force >= 0.0)) throw ConfigError("pick_cycle.grasp_force must be >= 0");
  gripper.validate();
  if (!gripper.in_range(grasp_theta_deg)) {
    throw ConfigError(fmt::format("pick_cycle.grasp_theta_deg = {} lies outside the gripper theta range",
                                  grasp_theta_deg));
  }
  if (home.size() != chain.dof() || !chain.within_limits(home)) {
    throw ConfigError("pick_cycle.home must match the chain and respect its limits");
  }
  if (punnet.size() != chain.dof() || !chain.within_limits(punnet)) {
    throw ConfigError("pick_cycle.punnet must match the chain and respect its limits");
  }
}

namespace {

void fail_plan(CyclePlan& plan, Outcome outcome, Stage stage, std::string detail) {
  plan.deterministic_failure = outcome;
  plan.failed_stage = stage;
  plan.failure_detail = std::move(detail);
}

// Gripper pose at `position` with the tool approach axis pointing along `dir`.
arm::Pose gripper_pose(const Eigen::Vector3d& position, const Eigen::Vector3d& dir, const arm::IkOptions& ik) {
  arm::Pose p;
  p.position = position;
  p.orientation = Eigen::Quaterniond::FromTwoVectors(ik.approach_axis, dir);
  return p;
}

std::optional<arm::JointVector> solve_ik(const arm::KinematicChain& chain, const arm::Pose& pose,
                                         const arm::JointVector& seed, const arm::IkOptions& ik) {
  try {
    return arm::inverse_kinematics(chain, pose, seed, ik).q;
  } catch (const arm::NoConvergence&) {
  }
  // Retry from a position-only warm start; reaching the point first keeps the
  // orientation phase out of the far-field local minima.
  arm::IkOptions warm = ik;
  warm.mode = arm::OrientationMode::kPositionOnly;
  arm::JointVector warm_q;
  try {
    warm_q = arm::inverse_kinematics(chain, pose, seed, warm).q;
  } catch (const arm::NoConvergence& e) {
    warm_q = e.best().q;
  }
  try {
    return arm::inverse_kinematics(chain, pose, warm_q, ik).q;
  } catch (const arm::NoConvergence&) {
    return std::nullopt;
  }
}

std::optional<planner::Trajectory> plan(const arm::KinematicChain& chain, const arm::JointVector& start,
                                        const arm::JointVector& goal, const planner::Scene& scene,
                                        const planner::PsoConfig& pso, std::string& why) {
  try {
    return planner::plan_trajectory(chain, start, goal, scene, pso).trajectory;
  } catch (const planner::PlanError& e) {
    why = e.what();
    return std::nullopt;
  }
}

double sample_duration(std::mt19937_64& rng, double mean, double stddev_frac) {
  const double sd = mean * stddev_frac;
  if (sd == 0.0) return mean;
  std::normal_distribution<double> dist(mean, sd);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double t = dist(rng);
    if (t > 0.0) return t;
  }
  return mean;
}

// Independent per-trial streams so the cut noise draws do not depend on how
// many duration samples were rejected.
std::mt19937_64 trial_stream(std::uint64_t trial_seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(trial_seed), static_cast<std::uint32_t>(trial_seed >> 32), stream};
  return std::mt19937_64(seq);
}

}  // namespace

CyclePlan prepare_cycle(const perception::TargetTomato& target, const arm::KinematicChain& chain,
                        const planner::Scene& scene, const planner::PsoConfig& pso, const PickCycleConfig& cfg) {
  cfg.validate(chain);
  scene.validate();
  pso.validate();

  CyclePlan plan;
  const Eigen::Vector3d up = target.pedicel_3d - target.center_3d;
  if (!(up.norm() > 0.0)) throw ConfigError("target pedicel coincides with its centre");
  plan.approach_dir = up.normalized();
  plan.pedicel = target.pedicel_3d;
  // The cutter closes in from the tomato side and fires cut_trigger_distance short of the pedicel.
  plan.nominal_cut_center = target.pedicel_3d - cfg.cut_trigger_distance * plan.approach_dir;

  try {
    plan.grasp_torque = mechanism::torque_single_finger(cfg.gripper, cfg.grasp_theta_deg, cfg.grasp_force,
                                                        cfg.gripper_branch);
  } catch (const mechanism::MechanismError& e) {
    throw ConfigError(fmt::format("grasp torque cannot be evaluated: {}", e.what()));
  }

  // APPROACH
  const Eigen::Vector3d pregrasp = target.center_3d - cfg.standoff * plan.approach_dir;
  const auto pre_q = solve_ik(chain, gripper_pose(pregrasp, plan.approach_dir, cfg.ik), cfg.home, cfg.ik);
  if (!pre_q) {
    fail_plan(plan, Outcome::kFailUnreachable, Stage::kApproach, "pre-grasp pose is unreachable");
    return plan;
  }
  plan.pregrasp_q = *pre_q;
  std::string why;
  auto approach = ::tomharvest::harvest::plan(chain, cfg.home, plan.pregrasp_q, scene, pso, why);
  if (!approach) {
    fail_plan(plan, Outcome::kFailNoPlan, Stage::kApproach, why);
    return plan;
  }
  plan.approach = std::make_shared<const planner::Trajectory>(std::move(*approach));

  // SEPARATE: kinematic feasibility of the advanced pose only.
  const Eigen::Vector3d inserted = pregrasp + cfg.insertion_depth * plan.approach_dir;
  const auto ins_q = solve_ik(chain, gripper_pose(inserted, plan.approach_dir, cfg.ik), plan.pregrasp_q, cfg.ik);
  if (!ins_q) {
    fail_plan(plan, Outcome::kFailUnreachable, Stage::kSeparate, "inserted pose is unreachable");
    return plan;
  }
  plan.insert_q = *ins_q;

  // DEPART
  auto depart = ::tomharvest::harvest::plan(chain, plan.insert_q, cfg.punnet, scene, pso, why);
  if (!depart) {
    fail_plan(plan, Outcome::kFailNoPlan, Stage::kDepart, why);
    return plan;
  }
  plan.depart = std::make_shared<const planner::Trajectory>(std::move(*depart));
  return plan;
}

PickCycleReport simulate_cycle(const CyclePlan& plan, const PickCycleConfig& cfg, std::uint64_t trial_seed) {
  std::mt19937_64 time_rng = trial_stream(trial_seed, 1);
  std::mt19937_64 noise_rng = trial_stream(trial_seed, 2);

  PickCycleReport report;
  report.trajectory_used = plan.approach;
  auto run = [&](Stage s) {
    report.stage_timings[s] = sample_duration(time_rng, cfg.stage_time_means.at(s), cfg.stage_time_stddev_frac);
  };
  auto finish = [&](Outcome o) {
    report.outcome = o;
    report.total_time = 0.0;
    for (const auto& [stage, t] : report.stage_timings) report.total_time += t;
    return report;
  };
  auto blocked_at = [&](Stage s) { return plan.failed_stage && *plan.failed_stage == s; };

  if (blocked_at(Stage::kApproach)) return finish(plan.deterministic_failure);
  run(Stage::kApproach);
  if (blocked_at(Stage::kSeparate)) return finish(plan.deterministic_failure);
  run(Stage::kSeparate);

  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Vector3d z;
  for (int k = 0; k < 3; ++k) z[k] = normal(noise_rng);
  const Eigen::Vector3d achieved = plan.nominal_cut_center + cfg.pose_noise_sigma * z;
  report.pedicel_miss_distance = (plan.pedicel - achieved).norm();
  report.cut_attempted = true;
  run(Stage::kCut);
  if (report.pedicel_miss_distance > cfg.cut_zone_radius) return finish(Outcome::kFailCutMissed);

  run(Stage::kGrasp);
  report.grasp_torque_total = plan.grasp_torque.torque_total;
  if (blocked_at(Stage::kDepart)) return finish(plan.deterministic_failure);
  run(Stage::kDepart);
  run(Stage::kRelease);
  return finish(Outcome::kSuccess);
}

PickCycleReport run_pick_cycle(const perception::TargetTomato& target, const arm::KinematicChain& chain,
                               const planner::Scene& scene, const planner::PsoConfig& pso,
                               const PickCycleConfig& cfg, std::uint64_t trial_seed) {
  return simulate_cycle(prepare_cycle(target, chain, scene, pso, cfg), cfg, trial_seed);
}

MonteCarloSummary summarize(const std::vector<PickCycleReport>& reports) {
  MonteCarloSummary s;
  s.trials = static_cast<int>(reports.size());
  for (Outcome o : kOutcomes) s.outcome_counts[o] = 0;

  std::vector<double> totals;
  std::map<Stage, std::vector<double>> per_stage;
  for (const auto& r : reports) {
    ++s.outcome_counts[r.outcome];
    if (r.outcome == Outcome::kSuccess) totals.push_back(r.total_time);
    for (const auto& [stage, t] : r.stage_timings) per_stage[stage].push_back(t);
  }

  auto moments = [](const std::vector<double>& xs) {
    StageStats st;
    st.count = static_cast<int>(xs.size());
    if (xs.empty()) return st;
    // Shifted by the first sample so constant data yields its value exactly.
    const double shift = xs.front();
    double sum = 0.0;
    for (double x : xs) sum += x - shift;
    const double offset = sum / static_cast<double>(xs.size());
    st.mean = shift + offset;
    if (xs.size() > 1) {
      double ss = 0.0;
      for (double x : xs) ss += (x - shift - offset) * (x - shift - offset);
      st.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return st;
  };

  s.success_rate = s.trials > 0 ? static_cast<double>(s.outcome_counts[Outcome::kSuccess]) / s.trials : 0.0;
  const StageStats total = moments(totals);
  s.total_time_mean = total.mean;
  s.total_time_stddev = total.stddev;
  for (Stage st : kStages) s.stage_stats[st] = moments(per_stage[st]);
  return s;
}

MonteCarloRun monte_carlo(const CyclePlan& plan, const PickCycleConfig& cfg, int trials, Exec exec) {
  if (trials < 1) throw ConfigError("monte carlo needs at least one trial");
  MonteCarloRun run;
  run.reports.resize(static_cast<std::size_t>(trials));
  if (exec == Exec::kSerial) {
    for (int i = 0; i < trials; ++i) {
      run.reports[static_cast<std::size_t>(i)] = simulate_cycle(plan, cfg, cfg.seed + static_cast<std::uint64_t>(i));
    }
  } else {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < trials; ++i) {
      run.reports[static_cast<std::size_t>(i)] = simulate_cycle(plan, cfg, cfg.seed + static_cast<std::uint64_t>(i));
    }
  }
  run.summary = summarize(run.reports);
  return run;
}

MonteCarloRun monte_carlo(const perception::TargetTomato& target, const arm::KinematicChain& chain,
                          const planner::Scene& scene, const planner::PsoConfig& pso, const PickCycleConfig& cfg,
                          int trials, Exec exec) {
  return monte_carlo(prepare_cycle(target, chain, scene, pso, cfg), cfg, trials, exec);
}

double calibrate_noise(const CyclePlan& plan, const PickCycleConfig& cfg, double target_rate, int trials_per_eval,
                       double tolerance) {
  if (!(target_rate > 0.0 && target_rate < 1.0)) throw ConfigError("calibration target rate must lie in (0, 1)");
  if (trials_per_eval < 1) throw ConfigError("calibration needs at least one trial per evaluation");

  auto rate_at = [&](double sigma) {
    PickCycleConfig c = cfg;
    c.pose_noise_sigma = sigma;
    return monte_carlo(plan, c, trials_per_eval).summary.success_rate;
  };

  double lo = 0.0;
  double hi = 5.0 * cfg.cut_zone_radius;
  const double rate_lo = rate_at(lo);
  const double rate_hi = rate_at(hi);
  if (!(rate_lo >= target_rate && rate_hi <= target_rate)) {
    throw CalibrationFailed(fmt::format("success rate over sigma in [0, {}] spans [{}, {}], which does not bracket {}",
                                        hi, rate_hi, rate_lo, target_rate));
  }
  if (std::abs(rate_lo - target_rate) <= tolerance) return lo;
  if (std::abs(rate_hi - target_rate) <= tolerance) return hi;

  double mid = 0.5 * (lo + hi);
  for (int step = 0; step < 40; ++step) {
    mid = 0.5 * (lo + hi);
    const double r = rate_at(mid);
    if (std::abs(r - target_rate) <= tolerance) return mid;
    if (r > target_rate) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return mid;
}

double calibrate_noise(const perception::TargetTomato& target, const arm::KinematicChain& chain,
                       const planner::Scene& scene, const planner::PsoConfig& pso, const PickCycleConfig& cfg,
                       double target_rate, int trials_per_eval, double tolerance) {
  return calibrate_noise(prepare_cycle(target, chain, scene, pso, cfg), cfg, target_rate, trials_per_eval, tolerance);
}

std::string to_string(Stage s) {
  switch (s) {
    case Stage::kApproach: return "approach";
    case Stage::kSeparate: return "separate";
    case Stage::kCut: return "cut";
    case Stage::kGrasp: return "grasp";
    case Stage::kDepart: return "depart";
    case Stage::kRelease: return "release";
  }
  return "unknown";
}

std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::kSuccess: return "success";
    case Outcome::kFailCutMissed: return "fail_cut_missed";
    case Outcome::kFailNoPlan: return "fail_no_plan";
    case Outcome::kFailUnreachable: return "fail_unreachable";
  }
  return "unknown";
}

Stage stage_from_string(const std::string& name) {
  for (Stage s : kStages) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError(fmt::format("unknown pick-cycle stage '{}'", name));
}

}  // namespace tomharvest::harvest
