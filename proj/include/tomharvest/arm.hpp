#pragma once

// Serial revolute chain standing in for the 5-DOF harvesting arm.
// Units: metres and radians.

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace tomharvest::arm {

using JointVector = Eigen::VectorXd;
using Jacobian = Eigen::Matrix<double, 6, Eigen::Dynamic>;

class ArmError : public std::runtime_error {
 public:
  enum class Kind { kDimensionMismatch, kInvalidTarget };

  ArmError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct Joint {
  std::string name;
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();  // in the parent frame, unit norm
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();  // offset from the previous joint frame
  double lower = -3.14159;
  double upper = 3.14159;
};

struct Pose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();

  Eigen::Isometry3d to_isometry() const;
  static Pose from_isometry(const Eigen::Isometry3d& iso);
};

class KinematicChain {
 public:
  KinematicChain(std::vector<Joint> joints, Eigen::Isometry3d base = Eigen::Isometry3d::Identity(),
                 Eigen::Isometry3d tool = Eigen::Isometry3d::Identity());

  int dof() const { return static_cast<int>(joints_.size()); }
  const std::vector<Joint>& joints() const { return joints_; }
  const Eigen::Isometry3d& base() const { return base_; }
  const Eigen::Isometry3d& tool() const { return tool_; }

  JointVector lower_limits() const;
  JointVector upper_limits() const;
  JointVector clamp(const JointVector& q) const;
  bool within_limits(const JointVector& q) const;

  /// Throws ArmError::kDimensionMismatch unless q has one entry per joint.
  void check_dimension(const JointVector& q) const;

 private:
  std::vector<Joint> joints_;
  Eigen::Isometry3d base_;
  Eigen::Isometry3d tool_;
};

/// ViperX-300-like 5-DOF layout (waist, shoulder, elbow, wrist angle,
/// wrist rotate). The dimensions are representative, not vendor data.
KinematicChain default_chain();

/// World-frame joint origins and axes at configuration q, plus the tool frame.
struct ChainFrames {
  std::vector<Eigen::Vector3d> origins;
  std::vector<Eigen::Vector3d> axes;
  Eigen::Isometry3d tool = Eigen::Isometry3d::Identity();
};

ChainFrames chain_frames(const KinematicChain& chain, const JointVector& q);

Pose forward_kinematics(const KinematicChain& chain, const JointVector& q);

/// Geometric Jacobian in the base frame: column i is (z_i x (p_tool - p_i), z_i).
Jacobian jacobian(const KinematicChain& chain, const JointVector& q);

enum class OrientationMode {
  kPositionOnly,
  kApproachAxis,  // track the direction of one tool axis (2 rotational DOF)
  kFull,
};

struct IkOptions {
  int max_iters = 200;
  double tol_pos = 1e-6;   // m
  double tol_rot = 1e-4;   // rad
  double damping = 0.05;   // lambda
  OrientationMode mode = OrientationMode::kApproachAxis;
  Eigen::Vector3d approach_axis = Eigen::Vector3d::UnitX();  // in the tool frame
};

struct IkResult {
  JointVector q;
  double position_error = 0.0;
  double orientation_error = 0.0;
  int iterations = 0;
  std::vector<double> residual_trace;  // combined task-space error, one entry per accepted iterate
};

class NoConvergence : public std::runtime_error {
 public:
  explicit NoConvergence(IkResult best);
  const IkResult& best() const noexcept { return best_; }

 private:
  IkResult best_;
};

/// Damped least-squares IK: q <- clamp(q + (J^T J + lambda^2 I)^-1 J^T err).
/// Each step is halved until the task-space error decreases (and doubled while
/// it keeps decreasing after a full step), so the residual trace never increases. Joints pinned at a limit and pushed further out are
/// frozen for that step. A seed outside the limits is clamped first.
/// Throws NoConvergence carrying the best iterate.
IkResult inverse_kinematics(const KinematicChain& chain, const Pose& target, const JointVector& seed,
                            const IkOptions& opts = {});

/// Angle between the tool approach axes of two poses (approach-axis mode) or
/// the full relative rotation angle.
double orientation_error(const Pose& current, const Pose& target, const IkOptions& opts);

}  // namespace tomharvest::arm
