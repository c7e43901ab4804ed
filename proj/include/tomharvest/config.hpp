#pragma once

// RunConfig: one JSON document with a section per module. Every section is
// optional and falls back to the built-in defaults; unknown keys are errors.
//
//   mechanism  lengths in mm, angles in deg
//   arm        joints (axis, origin m, limits rad), base/tool transforms
//   ik         damped least-squares options
//   camera     intrinsics px, extrinsics camera->base (quaternion wxyz, m)
//   perception keypoint confidence threshold, depth window, selection policy
//   scene      spheres / capsules / bounds in m
//   pso        particle swarm settings
//   pick_cycle stage means s, noise and cut-zone geometry m, home/punnet rad
//   plan       start / goal joint vectors for the plan subcommand
//   io         detections / depth file paths (relative to the config file)

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "tomharvest/arm.hpp"
#include "tomharvest/harvest.hpp"
#include "tomharvest/mechanism.hpp"
#include "tomharvest/perception.hpp"
#include "tomharvest/planner.hpp"

namespace tomharvest::config {

struct RunConfig {
  mechanism::MechanismParams mechanism;
  mechanism::Branch branch = mechanism::Branch::kElbowUp;
  arm::KinematicChain chain = arm::default_chain();
  arm::IkOptions ik;
  perception::CameraModel camera;
  perception::TargetOptions target_options;
  perception::SelectionPolicy policy = perception::SelectionPolicy::kRipestNearest;
  planner::Scene scene;
  planner::PsoConfig pso;
  harvest::PickCycleConfig pick_cycle;
  std::optional<arm::JointVector> plan_start;
  std::optional<arm::JointVector> plan_goal;
  std::optional<std::filesystem::path> detections_path;
  std::optional<std::filesystem::path> depth_path;

  /// Validates every section; throws ConfigError. Also checks that the finger
  /// linkage assembles over its whole theta range.
  void validate() const;

  /// Overrides the planner and pick-cycle seeds.
  void set_seed(std::uint64_t seed);
};

/// Parses and validates. Relative io paths resolve against `base_dir`.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::json to_json(const RunConfig& cfg);

}  // namespace tomharvest::config
