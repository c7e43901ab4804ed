#include "tomharvest/planner.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <random>

#include "tomharvest/geometry.hpp"

namespace tomharvest::planner {

void Scene::validate() const {
  for (std::size_t i = 0; i < spheres.size(); ++i) {
    if (!(spheres[i].radius > 0.0) || !spheres[i].center.allFinite()) {
      throw ConfigError(fmt::format("scene.spheres[{}] needs a finite centre and radius > 0", i));
    }
  }
  for (std::size_t i = 0; i < capsules.size(); ++i) {
    const auto& c = capsules[i];
    if (!(c.radius > 0.0) || !c.p0.allFinite() || !c.p1.allFinite()) {
      throw ConfigError(fmt::format("scene.capsules[{}] needs finite endpoints and radius > 0", i));
    }
  }
  for (int k = 0; k < 3; ++k) {
    if (!(workspace_bounds.min[k] < workspace_bounds.max[k])) {
      throw ConfigError("scene.bounds min must be below max on every axis");
    }
  }
}

void PsoConfig::validate() const {
  if (swarm_size < 2) throw ConfigError("pso.swarm_size must be at least 2");
  if (iterations < 1) throw ConfigError("pso.iterations must be at least 1");
  if (!(inertia >= 0.0 && inertia <= 1.0)) throw ConfigError("pso.inertia must lie in [0, 1]");
  if (!(cognitive >= 0.0) || !(social >= 0.0)) throw ConfigError("pso.cognitive and pso.social must be >= 0");
  if (waypoints_per_particle < 1) throw ConfigError("pso.waypoints must be at least 1");
  if (!(collision_penalty >= 0.0) || !(limit_penalty >= 0.0)) {
    throw ConfigError("pso penalty weights must be >= 0");
  }
  if (!(clearance >= 0.0)) throw ConfigError("pso.clearance must be >= 0");
  if (samples_per_segment < 1) throw ConfigError("pso.samples_per_segment must be at least 1");
  if (!(init_inflation >= 0.0) || !(init_min_margin >= 0.0)) {
    throw ConfigError("pso initialisation margins must be >= 0");
  }
}

std::vector<Eigen::Vector3d> arm_polyline(const KinematicChain& chain, const JointVector& q) {
  arm::ChainFrames frames = arm::chain_frames(chain, q);
  std::vector<Eigen::Vector3d> pts = std::move(frames.origins);
  pts.push_back(frames.tool.translation());
  return pts;
}

CollisionResult collision_check(const KinematicChain& chain, const JointVector& q, const Scene& scene,
                                double clearance) {
  CollisionResult result;
  if (scene.spheres.empty() && scene.capsules.empty()) return result;

  const auto pts = arm_polyline(chain, q);
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const auto& a = pts[i];
    const auto& b = pts[i + 1];
    for (const auto& s : scene.spheres) {
      result.min_clearance = std::min(result.min_clearance, geometry::point_segment_distance(s.center, a, b) - s.radius);
    }
    for (const auto& c : scene.capsules) {
      result.min_clearance =
          std::min(result.min_clearance, geometry::segment_segment_distance(a, b, c.p0, c.p1) - c.radius);
    }
  }
  result.colliding = result.min_clearance < clearance;
  return result;
}

namespace {

double limit_violation(const KinematicChain& chain, const JointVector& q) {
  double total = 0.0;
  for (int j = 0; j < chain.dof(); ++j) {
    const auto& joint = chain.joints()[static_cast<std::size_t>(j)];
    total += std::max(0.0, joint.lower - q[j]) + std::max(0.0, q[j] - joint.upper);
  }
  return total;
}

}  // namespace

JointVector reach_bounds(const KinematicChain& chain) {
  JointVector reach(chain.dof());
  double outward = chain.tool().translation().norm();
  for (int i = chain.dof() - 1; i >= 0; --i) {
    reach[i] = outward;
    outward += chain.joints()[static_cast<std::size_t>(i)].origin.norm();
  }
  return reach;
}

namespace {

std::vector<JointVector> unpack(const Eigen::Ref<const Eigen::VectorXd>& flat, const JointVector& start,
                                const JointVector& goal) {
  const auto n = start.size();
  const auto w = flat.size() / n;
  std::vector<JointVector> wps;
  wps.reserve(static_cast<std::size_t>(w + 2));
  wps.push_back(start);
  for (Eigen::Index i = 0; i < w; ++i) wps.emplace_back(flat.segment(i * n, n));
  wps.push_back(goal);
  return wps;
}

}  // namespace

FitnessBreakdown fitness(std::span<const JointVector> waypoints, const KinematicChain& chain,
                         const Scene& scene, const PsoConfig& config, int samples_per_segment) {
  if (waypoints.size() < 2) {
    throw PlanError(PlanError::Kind::kDimensionMismatch, "a trajectory needs at least start and goal");
  }
  for (const auto& w : waypoints) {
    if (w.size() != chain.dof()) {
      throw PlanError(PlanError::Kind::kDimensionMismatch,
                      fmt::format("waypoint has {} entries, chain has {} joints", w.size(), chain.dof()));
    }
  }

  FitnessBreakdown out;
  double violation = 0.0;
  const JointVector reach = reach_bounds(chain);
  for (std::size_t i = 0; i + 1 < waypoints.size(); ++i) {
    const JointVector& a = waypoints[i];
    const JointVector& b = waypoints[i + 1];
    out.path_length += (b - a).norm();
    // A sample must also keep clear of everything the arm can sweep within
    // half a sample step on either side, so the samples jointly certify the
    // whole segment rather than isolated poses.
    const double margin = 0.5 * (b - a).cwiseAbs().dot(reach) / samples_per_segment;
    for (int s = 1; s <= samples_per_segment; ++s) {
      const JointVector q = s == samples_per_segment
                                ? b
                                : JointVector(a + (b - a) * (static_cast<double>(s) / samples_per_segment));
      if (collision_check(chain, q, scene, config.clearance + margin).colliding) ++out.colliding_samples;
    }
  }
  for (const auto& w : waypoints) violation += limit_violation(chain, w);

  out.collision_penalty = config.collision_penalty * out.colliding_samples;
  out.limit_penalty = config.limit_penalty * violation;
  out.score = out.path_length + out.collision_penalty + out.limit_penalty;
  return out;
}

std::vector<double> evaluate_swarm(const Eigen::MatrixXd& particles, const JointVector& start,
                                   const JointVector& goal, const KinematicChain& chain, const Scene& scene,
                                   const PsoConfig& config, Exec exec) {
  const int count = static_cast<int>(particles.cols());
  std::vector<double> scores(static_cast<std::size_t>(count));
  auto score_one = [&](int i) {
    const auto wps = unpack(particles.col(i), start, goal);
    return fitness(wps, chain, scene, config).score;
  };
  if (exec == Exec::kSerial) {
    for (int i = 0; i < count; ++i) scores[static_cast<std::size_t>(i)] = score_one(i);
  } else {
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < count; ++i) scores[static_cast<std::size_t>(i)] = score_one(i);
  }
  return scores;
}

PlanResult plan_trajectory(const KinematicChain& chain, const JointVector& start, const JointVector& goal,
                           const Scene& scene, const PsoConfig& config, Exec exec) {
  config.validate();
  if (start.size() != chain.dof() || goal.size() != chain.dof()) {
    throw PlanError(PlanError::Kind::kDimensionMismatch, "start/goal dimension does not match the chain");
  }
  if (collision_check(chain, start, scene, config.clearance).colliding) {
    throw PlanError(PlanError::Kind::kInfeasibleEndpoints, "start configuration collides with the scene");
  }
  if (collision_check(chain, goal, scene, config.clearance).colliding) {
    throw PlanError(PlanError::Kind::kInfeasibleEndpoints, "goal configuration collides with the scene");
  }

  const int n = chain.dof();
  const int w = config.waypoints_per_particle;
  const int dim = n * w;
  const int swarm = config.swarm_size;

  Eigen::VectorXd lo(dim), hi(dim), box_lo(dim), box_hi(dim);
  for (int j = 0; j < n; ++j) {
    const auto& joint = chain.joints()[static_cast<std::size_t>(j)];
    const double mn = std::min(start[j], goal[j]);
    const double mx = std::max(start[j], goal[j]);
    const double margin = std::max(config.init_inflation * (mx - mn), config.init_min_margin);
    for (int k = 0; k < w; ++k) {
      lo[k * n + j] = joint.lower;
      hi[k * n + j] = joint.upper;
      box_lo[k * n + j] = std::max(joint.lower, mn - margin);
      box_hi[k * n + j] = std::min(joint.upper, mx + margin);
    }
  }

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Eigen::MatrixXd x(dim, swarm);
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(dim, swarm);
  for (int k = 0; k < w; ++k) {
    const double t = static_cast<double>(k + 1) / (w + 1);
    x.col(0).segment(k * n, n) = start + t * (goal - start);
  }
  for (int i = 1; i < swarm; ++i) {
    for (int d = 0; d < dim; ++d) x(d, i) = box_lo[d] + unit(rng) * (box_hi[d] - box_lo[d]);
  }

  Eigen::MatrixXd pbest = x;
  std::vector<double> pbest_score = evaluate_swarm(x, start, goal, chain, scene, config, exec);
  int gbest = static_cast<int>(std::min_element(pbest_score.begin(), pbest_score.end()) - pbest_score.begin());

  PlanResult result;
  result.trace.reserve(static_cast<std::size_t>(config.iterations + 1));
  result.trace.push_back(pbest_score[static_cast<std::size_t>(gbest)]);

  for (int iter = 0; iter < config.iterations; ++iter) {
    const Eigen::VectorXd g = pbest.col(gbest);
    for (int i = 0; i < swarm; ++i) {
      for (int d = 0; d < dim; ++d) {
        const double r1 = unit(rng);
        const double r2 = unit(rng);
        v(d, i) = config.inertia * v(d, i) + config.cognitive * r1 * (pbest(d, i) - x(d, i)) +
                  config.social * r2 * (g[d] - x(d, i));
        x(d, i) = std::clamp(x(d, i) + v(d, i), lo[d], hi[d]);
      }
    }
    const std::vector<double> scores = evaluate_swarm(x, start, goal, chain, scene, config, exec);
    for (int i = 0; i < swarm; ++i) {
      const auto si = static_cast<std::size_t>(i);
      if (scores[si] < pbest_score[si]) {
        pbest_score[si] = scores[si];
        pbest.col(i) = x.col(i);
        if (scores[si] < pbest_score[static_cast<std::size_t>(gbest)]) gbest = i;
      }
    }
    result.trace.push_back(pbest_score[static_cast<std::size_t>(gbest)]);
  }

  Trajectory& traj = result.trajectory;
  traj.waypoints = unpack(pbest.col(gbest), start, goal);
  traj.breakdown = fitness(traj.waypoints, chain, scene, config);
  traj.fitness = traj.breakdown.score;
  traj.feasible = traj.breakdown.colliding_samples == 0;
  if (!traj.feasible) {
    throw PlanError(PlanError::Kind::kNoFeasibleFound,
                    fmt::format("best trajectory still has {} colliding samples", traj.breakdown.colliding_samples),
                    std::move(result));
  }
  return result;
}

std::string to_string(SphereTag tag) { return tag == SphereTag::kTomato ? "tomato" : "other"; }
std::string to_string(CapsuleTag tag) { return tag == CapsuleTag::kStem ? "stem" : "branch"; }

SphereTag sphere_tag_from_string(const std::string& name) {
  if (name == "tomato") return SphereTag::kTomato;
  if (name == "other") return SphereTag::kOther;
  throw ConfigError(fmt::format("unknown sphere tag '{}'", name));
}

CapsuleTag capsule_tag_from_string(const std::string& name) {
  if (name == "stem") return CapsuleTag::kStem;
  if (name == "branch") return CapsuleTag::kBranch;
  throw ConfigError(fmt::format("unknown capsule tag '{}'", name));
}

}  // namespace tomharvest::planner
