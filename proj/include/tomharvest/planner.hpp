#pragma once

// Particle swarm trajectory planning in joint space through a scene of
// sphere and capsule obstacles.

#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tomharvest/arm.hpp"
#include "tomharvest/common.hpp"

namespace tomharvest::planner {

using arm::JointVector;
using arm::KinematicChain;

enum class SphereTag { kTomato, kOther };
enum class CapsuleTag { kStem, kBranch };

struct Sphere {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 0.0;
  SphereTag tag = SphereTag::kOther;
};

struct Capsule {
  Eigen::Vector3d p0 = Eigen::Vector3d::Zero();
  Eigen::Vector3d p1 = Eigen::Vector3d::Zero();
  double radius = 0.0;
  CapsuleTag tag = CapsuleTag::kBranch;
};

struct Aabb {
  Eigen::Vector3d min = Eigen::Vector3d::Constant(-1.0);
  Eigen::Vector3d max = Eigen::Vector3d::Constant(1.0);
};

struct Scene {
  std::vector<Sphere> spheres;
  std::vector<Capsule> capsules;
  Aabb workspace_bounds;

  void validate() const;
};

struct PsoConfig {
  int swarm_size = 30;
  int iterations = 300;
  double inertia = 0.7;
  double cognitive = 1.5;
  double social = 1.5;
  int waypoints_per_particle = 3;
  std::uint64_t seed = 42;
  double collision_penalty = 100.0;
  double limit_penalty = 100.0;
  double clearance = 0.01;  // m
  int samples_per_segment = 20;
  double init_inflation = 0.2;   // fraction of the start/goal span added on each side
  double init_min_margin = 0.1;  // rad, floor for the inflation margin

  void validate() const;
};

struct FitnessBreakdown {
  double path_length = 0.0;        // rad
  double collision_penalty = 0.0;  // weight x colliding samples
  double limit_penalty = 0.0;      // weight x total limit violation
  int colliding_samples = 0;
  double score = 0.0;
};

struct Trajectory {
  std::vector<JointVector> waypoints;  // start, intermediates..., goal
  double fitness = 0.0;
  bool feasible = false;
  FitnessBreakdown breakdown;
};

struct PlanResult {
  Trajectory trajectory;
  std::vector<double> trace;  // global-best score after initialisation and after each iteration
};

class PlanError : public std::runtime_error {
 public:
  enum class Kind { kInfeasibleEndpoints, kNoFeasibleFound, kDimensionMismatch };

  PlanError(Kind kind, const std::string& what, PlanResult best = {})
      : std::runtime_error(what), kind_(kind), best_(std::move(best)) {}
  Kind kind() const noexcept { return kind_; }
  /// Best (infeasible) result for kNoFeasibleFound; empty otherwise.
  const PlanResult& best() const noexcept { return best_; }

 private:
  Kind kind_;
  PlanResult best_;
};

struct CollisionResult {
  bool colliding = false;
  double min_clearance = std::numeric_limits<double>::max();
};

/// Arm modelled as the polyline through the joint origins and the tool point.
/// min_clearance is the smallest signed surface distance to any obstacle;
/// colliding when it falls below `clearance`.
CollisionResult collision_check(const KinematicChain& chain, const JointVector& q, const Scene& scene,
                                double clearance);

/// Points of the arm polyline at q.
std::vector<Eigen::Vector3d> arm_polyline(const KinematicChain& chain, const JointVector& q);

/// Per joint, an upper bound on the distance from that joint to any arm point
/// further down the chain: a rotation by dq moves no arm point more than
/// sum(|dq_i| * reach_i).
JointVector reach_bounds(const KinematicChain& chain);

/// Scores a waypoint sequence. Each segment is sampled at
/// `samples_per_segment` evenly spaced points excluding its start, so every
/// waypoint after the first is checked exactly once. A sample counts as
/// colliding when its clearance is below config.clearance plus the largest
/// arm displacement within half a sample step. Lower is better.
FitnessBreakdown fitness(std::span<const JointVector> waypoints, const KinematicChain& chain,
                         const Scene& scene, const PsoConfig& config, int samples_per_segment);

inline FitnessBreakdown fitness(std::span<const JointVector> waypoints, const KinematicChain& chain,
                                const Scene& scene, const PsoConfig& config) {
  return fitness(waypoints, chain, scene, config, config.samples_per_segment);
}

/// Scores every column of `particles` (flattened intermediate waypoints).
std::vector<double> evaluate_swarm(const Eigen::MatrixXd& particles, const JointVector& start,
                                   const JointVector& goal, const KinematicChain& chain, const Scene& scene,
                                   const PsoConfig& config, Exec exec);

/// Global-best PSO over intermediate waypoints. Deterministic for a given
/// config.seed independent of `exec`.
///
/// Throws PlanError::kInfeasibleEndpoints when start or goal collides and
/// PlanError::kNoFeasibleFound (carrying the best result) when the best
/// trajectory still collides.
PlanResult plan_trajectory(const KinematicChain& chain, const JointVector& start, const JointVector& goal,
                           const Scene& scene, const PsoConfig& config, Exec exec = Exec::kParallel);

std::string to_string(SphereTag tag);
std::string to_string(CapsuleTag tag);
SphereTag sphere_tag_from_string(const std::string& name);
CapsuleTag capsule_tag_from_string(const std::string& name);

}  // namespace tomharvest::planner
