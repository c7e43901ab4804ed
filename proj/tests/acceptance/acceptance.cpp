// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.
//
//   acceptance <harvestsim binary> <repo root>

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "tomharvest/config.hpp"

using namespace tomharvest;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// Runs `body`, appends the runtime and checks it against `budget_s` (0 = none).
bool report(int id, const std::string& name, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, fmt::format("exception: {}", e.what())};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::string timing = fmt::format("{:.3f} s", secs);
  if (budget_s > 0.0) {
    timing += fmt::format(" (budget {} s)", budget_s);
    if (secs >= budget_s) o.pass = false;
  }
  fmt::print("{} {:>2} {}: {}; {}\n", o.pass ? "PASS" : "FAIL", id, name, o.detail, timing);
  std::fflush(stdout);
  return o.pass;
}

// Central-difference virtual-work oracle in radians.
double x_m_at(const mechanism::MechanismParams& p, double theta_deg) {
  return mechanism::solve_finger_position_unchecked(p, theta_deg, mechanism::Branch::kElbowUp).x_m;
}

double torque_oracle(const mechanism::MechanismParams& p, double theta_deg, double force) {
  const double h = 1e-5, hd = h * 180.0 / std::numbers::pi;
  return -force * (x_m_at(p, theta_deg + hd) - x_m_at(p, theta_deg - hd)) / (2.0 * h);
}

// Least-squares line y = slope x + icept; returns {slope, max |residual| / max |y|}.
std::pair<double, double> line_fit(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double icept = (sy - slope * sx) / n;
  double worst = 0, scale = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    worst = std::max(worst, std::abs(y[i] - (slope * x[i] + icept)));
    scale = std::max(scale, std::abs(y[i]));
  }
  return {slope, worst / scale};
}

// P(|delta e + sigma Z| <= r), Z ~ N(0, I3): Simpson integral of the noncentral radial density.
double analytic_hit_probability(double delta, double sigma, double r) {
  const double s2 = 2.0 * sigma * sigma;
  auto f = [&](double rho) {
    return rho / (delta * sigma * std::sqrt(2.0 * std::numbers::pi)) *
           (std::exp(-(rho - delta) * (rho - delta) / s2) - std::exp(-(rho + delta) * (rho + delta) / s2));
  };
  const int n = 20000;
  const double h = r / n;
  double sum = f(0.0) + f(r);
  for (int i = 1; i < n; ++i) sum += (i % 2 ? 4.0 : 2.0) * f(i * h);
  return sum * h / 3.0;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Fixture {
  config::RunConfig cfg;
  perception::TargetTomato target;
};

Fixture load_fixture(const fs::path& root) {
  Fixture fx{config::load_run_config(root / "config" / "default.json"), {}};
  const auto recs = perception::load_detections(*fx.cfg.detections_path);
  const auto depth = perception::load_depth_frame(*fx.cfg.depth_path);
  fx.target = perception::select_target(recs, fx.cfg.camera, depth, fx.cfg.policy, fx.cfg.target_options);
  return fx;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 3) {
    fmt::print(stderr, "usage: acceptance <harvestsim> <repo root>\n");
    return 2;
  }
  const std::string harvestsim = argv[1];
  const fs::path root = argv[2];
  const mechanism::MechanismParams mp;
  const auto up = mechanism::Branch::kElbowUp;
  int failures = 0;
  auto tally = [&](bool ok) { failures += ok ? 0 : 1; };

  tally(report(1, "Mechanism closure", 1.0, [&] {
    const auto sweep = mechanism::sweep_positions(mp, mp.theta_min_deg, mp.theta_max_deg, 0.1, up);
    double worst = 0.0;
    int unsolved = 0;
    for (const auto& s : sweep) {
      if (!s.solution) ++unsolved;
      worst = std::max(worst, s.residual_norm);
    }
    return Outcome{unsolved == 0 && worst < 1e-9,
                   fmt::format("{} samples, {} unsolved, max residual {:.3g} mm (tol 1e-9)", sweep.size(), unsolved,
                               worst)};
  }));

  tally(report(2, "Virtual-work consistency", 1.0, [&] {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> th(mp.theta_min_deg, mp.theta_max_deg), force(0.1, 20.0);
    double worst_t = 0.0, worst_d = 0.0;
    for (int i = 0; i < 100; ++i) {
      const double t = th(rng), p = force(rng);
      worst_t = std::max(worst_t, rel(mechanism::torque_single_finger(mp, t, p, up).torque_single,
                                      torque_oracle(mp, t, p)));
      worst_d = std::max(worst_d, rel(mechanism::xi_derivative(mp, t, up, mechanism::DerivativeMethod::kAnalytic),
                                      mechanism::xi_derivative(mp, t, up, mechanism::DerivativeMethod::kFiniteDifference)));
    }
    return Outcome{worst_t < 1e-6 && worst_d < 1e-6,
                   fmt::format("100 samples, torque rel err {:.3g}, dxi/dtheta rel err {:.3g} (tol 1e-6)", worst_t,
                               worst_d)};
  }));

  tally(report(3, "Six-finger total", 0.0, [&] {
    int checked = 0, mismatched = 0;
    for (const auto& s : mechanism::sweep_positions(mp, mp.theta_min_deg, mp.theta_max_deg, 0.1, up)) {
      for (double p : {0.5, 5.0, 17.3}) {
        const auto r = mechanism::torque_single_finger(mp, std::min(s.theta, mp.theta_max_deg), p, up);
        ++checked;
        if (r.torque_total != 6.0 * r.torque_single) ++mismatched;
      }
    }
    return Outcome{mismatched == 0, fmt::format("{} of {} samples differ from 6 x single bitwise", mismatched, checked)};
  }));

  tally(report(4, "Force-torque linearity", 0.0, [&] {
    double worst_fit = 0.0, worst_slope = 0.0, worst_scale = 0.0;
    for (double theta : {10.0, 45.0, 90.0, 115.0}) {
      const auto curve = mechanism::force_torque_curve(mp, theta, 0.0, 20.0, 21, up);
      std::vector<double> f, t, fs2, ts2;
      const double lambda = 3.7;
      for (const auto& r : curve) {
        f.push_back(r.force_p);
        t.push_back(r.torque_single);
        const auto scaled = mechanism::torque_single_finger(mp, theta, lambda * r.force_p, up);
        fs2.push_back(scaled.force_p);
        ts2.push_back(scaled.torque_single);
        if (r.force_p > 0.0) worst_scale = std::max(worst_scale, rel(scaled.torque_single, lambda * r.torque_single));
      }
      const auto [slope, resid] = line_fit(f, t);
      const auto [slope2, resid2] = line_fit(fs2, ts2);
      worst_fit = std::max({worst_fit, resid, resid2});
      worst_slope = std::max(worst_slope, rel(slope2, slope));
    }
    return Outcome{worst_fit < 1e-12 && worst_slope < 1e-12 && worst_scale < 1e-12,
                   fmt::format("fit residual {:.3g}, slope change under P-scaling {:.3g}, T(lP)/lT(P)-1 {:.3g} "
                               "(tol 1e-12)",
                               worst_fit, worst_slope, worst_scale)};
  }));

  tally(report(5, "IK round trip", 30.0, [&] {
    const auto chain = arm::default_chain();
    const arm::IkOptions opts;
    std::mt19937_64 rng(5);
    std::normal_distribution<double> noise(0.0, 0.1);
    int solved = 0, wrong = 0;
    for (int t = 0; t < 1000; ++t) {
      arm::JointVector q(chain.dof());
      for (int i = 0; i < chain.dof(); ++i) {
        const auto& j = chain.joints()[static_cast<std::size_t>(i)];
        q[i] = std::uniform_real_distribution<double>(j.lower, j.upper)(rng);
      }
      arm::JointVector seed = q;
      for (int i = 0; i < chain.dof(); ++i) seed[i] += noise(rng);
      const arm::Pose target = arm::forward_kinematics(chain, q);
      try {
        const auto r = arm::inverse_kinematics(chain, target, seed, opts);
        const arm::Pose got = arm::forward_kinematics(chain, r.q);
        if ((got.position - target.position).norm() < 1e-6 && arm::orientation_error(got, target, opts) < opts.tol_rot &&
            chain.within_limits(r.q)) {
          ++solved;
        } else {
          ++wrong;
        }
      } catch (const arm::NoConvergence&) {
      }
    }
    return Outcome{solved >= 990 && wrong == 0,
                   fmt::format("{}/1000 solved to < 1e-6 m (need 990), {} silent wrong poses", solved, wrong)};
  }));

  tally(report(6, "PSO quality", 60.0, [&] {
    const auto chain = arm::default_chain();
    arm::JointVector s(5), g(5);
    s << -0.6, -0.4, 0.6, 0.2, 0.0;
    g << 0.9, 0.1, 0.2, -0.5, 0.4;
    planner::PsoConfig empty_cfg;
    empty_cfg.seed = 42;
    empty_cfg.waypoints_per_particle = 1;
    empty_cfg.iterations = 200;
    const auto empty = planner::plan_trajectory(chain, s, g, planner::Scene{}, empty_cfg);
    const double ratio = empty.trajectory.fitness / (g - s).norm();
    bool monotone = std::is_sorted(empty.trace.rbegin(), empty.trace.rend());

    const auto cfg = config::load_run_config(root / "config" / "default.json");
    int feasible = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      planner::PsoConfig pso = cfg.pso;
      pso.seed = seed;
      planner::PlanResult r;
      try {
        r = planner::plan_trajectory(cfg.chain, *cfg.plan_start, *cfg.plan_goal, cfg.scene, pso);
      } catch (const planner::PlanError& e) {
        if (e.kind() != planner::PlanError::Kind::kNoFeasibleFound) throw;
        r = e.best();
      }
      if (r.trajectory.feasible) ++feasible;
      monotone = monotone && std::is_sorted(r.trace.rbegin(), r.trace.rend());
    }
    return Outcome{ratio <= 1.01 && feasible >= 18 && monotone,
                   fmt::format("empty scene score / straight line = {:.6f} (tol 1.01); cluttered fixture feasible in "
                               "{}/20 seeds (need 18); traces non-increasing: {}",
                               ratio, feasible, monotone ? "yes" : "no")};
  }));

  tally(report(7, "Projection exactness", 0.0, [&] {
    perception::CameraModel cam;
    cam.fx = 612.3;
    cam.fy = 611.8;
    cam.cx = 318.6;
    cam.cy = 243.2;
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      for (int j = 0; j < 100; ++j) {
        const double u = 6.4 * i + 0.3, v = 4.8 * j + 0.7, z = 0.1 + 0.03 * ((7 * i + 3 * j) % 100);
        const Eigen::Vector3d p = perception::pixel_to_camera(cam, u, v, z);
        const Eigen::Vector3d px = perception::camera_to_pixel(cam, p);
        worst = std::max(worst, (perception::pixel_to_camera(cam, px.x(), px.y(), px.z()) - p).norm());
      }
    }
    const bool principal = perception::pixel_to_camera(cam, cam.cx, cam.cy, 1.3) == Eigen::Vector3d(0.0, 0.0, 1.3);
    return Outcome{worst < 1e-9 && principal,
                   fmt::format("10^4-point grid max round-trip error {:.3g} m (tol 1e-9); principal point exact: {}",
                               worst, principal ? "yes" : "no")};
  }));

  tally(report(8, "Cut-model statistics", 60.0, [&] {
    harvest::PickCycleConfig cfg;
    harvest::CyclePlan plan;
    plan.approach_dir = Eigen::Vector3d(0.0, 0.6, 0.8);
    plan.pedicel = Eigen::Vector3d(0.4, 0.1, 0.5);
    plan.nominal_cut_center = plan.pedicel - cfg.cut_trigger_distance * plan.approach_dir;
    const int n = 100000;
    const auto run = harvest::monte_carlo(plan, cfg, n);
    const double p = analytic_hit_probability(cfg.cut_trigger_distance, cfg.pose_noise_sigma, cfg.cut_zone_radius);
    const double band = 3.0 * std::sqrt(p * (1.0 - p) / n);
    const double diff = std::abs(run.summary.success_rate - p);
    return Outcome{diff < band, fmt::format("empirical {:.5f} vs analytic {:.5f}, |diff| {:.5f} (3-sigma band {:.5f})",
                                            run.summary.success_rate, p, diff, band)};
  }));

  tally(report(9, "Calibrated success rate", 120.0, [&] {
    const Fixture fx = load_fixture(root);
    harvest::PickCycleConfig cycle = fx.cfg.pick_cycle;
    const auto plan = harvest::prepare_cycle(fx.target, fx.cfg.chain, fx.cfg.scene, fx.cfg.pso, cycle);
    const int calibration_trials = 2000;
    cycle.pose_noise_sigma = harvest::calibrate_noise(plan, cycle, 0.80, calibration_trials);
    cycle.seed += calibration_trials;  // fresh seed set
    const double rate = harvest::monte_carlo(plan, cycle, 1000).summary.success_rate;
    return Outcome{rate >= 0.75 && rate <= 0.85,
                   fmt::format("sigma* = {:.6g} m, hold-out 1000-trial success rate {:.3f} (band [0.75, 0.85])",
                               cycle.pose_noise_sigma, rate)};
  }));

  tally(report(10, "Cycle time", 0.0, [&] {
    double sum = 0.0;
    for (harvest::Stage s : harvest::kStages) sum += harvest::default_stage_means().at(s);
    const Fixture fx = load_fixture(root);
    harvest::PickCycleConfig cycle = fx.cfg.pick_cycle;
    const auto plan = harvest::prepare_cycle(fx.target, fx.cfg.chain, fx.cfg.scene, fx.cfg.pso, cycle);
    cycle.stage_time_stddev_frac = 0.0;
    const auto exact = harvest::monte_carlo(plan, cycle, 1000);
    int successes = 0, off = 0;
    for (const auto& r : exact.reports) {
      if (r.outcome != harvest::Outcome::kSuccess) continue;
      ++successes;
      if (r.total_time != 24.34) ++off;
    }
    cycle.stage_time_stddev_frac = 0.1;
    const double mean = harvest::monte_carlo(plan, cycle, 1000).summary.total_time_mean;
    return Outcome{sum == 24.34 && successes > 0 && off == 0 && mean >= 23.5 && mean <= 25.2,
                   fmt::format("stage means sum {}; zero variance: {}/{} successful cycles differ from 24.34; 10% "
                               "variance mean {:.3f} s (band [23.5, 25.2])",
                               sum, off, successes, mean)};
  }));

  tally(report(11, "CLI determinism", 0.0, [&] {
    const fs::path dir = fs::temp_directory_path() / "tomharvest_acceptance";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string cfg = "--config \"" + (root / "config" / "default.json").string() + "\" --quiet ";
    const std::vector<std::pair<std::string, std::string>> cases = {
        {"torque-curve", "torque.csv"},
        {"solve-mechanism --step 0.1", "solve.csv"},
        {"plan", "plan.json"},
        {"pick-stats --trials 1000 --calibrate-to 0.8", "pick.json"},
    };
    int identical = 0, total = 0;
    std::string bad;
    for (const auto& [sub, name] : cases) {
      for (const char* variant : {"a", "b", "serial"}) {
        const std::string extra = std::string(variant) == "serial" ? "--serial " : "";
        const std::string cmd = "\"" + harvestsim + "\" " + cfg + extra + sub + " --out \"" +
                                (dir / (std::string(variant) + "_" + name)).string() + "\"";
        const int status = std::system(cmd.c_str());
        if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) throw std::runtime_error("command failed: " + cmd);
      }
      std::vector<std::string> files = {name};
      if (name == "pick.json") files.push_back("pick.trials.csv");
      for (const auto& f : files) {
        const std::string a = slurp(dir / ("a_" + f));
        ++total;
        if (!a.empty() && a == slurp(dir / ("b_" + f)) && a == slurp(dir / ("serial_" + f))) {
          ++identical;
        } else {
          bad += " " + f;
        }
      }
    }
    fs::remove_all(dir);
    return Outcome{identical == total,
                   fmt::format("{}/{} output files byte-identical across reruns and serial/parallel{}", identical,
                               total, bad.empty() ? "" : " (differs:" + bad + ")")};
  }));

  fmt::print("{} of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
