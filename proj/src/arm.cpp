#include "tomharvest/arm.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include <Eigen/Cholesky>

#include "tomharvest/common.hpp"

namespace tomharvest::arm {

Eigen::Isometry3d Pose::to_isometry() const {
  Eigen::Isometry3d iso = Eigen::Isometry3d::Identity();
  iso.linear() = orientation.normalized().toRotationMatrix();
  iso.translation() = position;
  return iso;
}

Pose Pose::from_isometry(const Eigen::Isometry3d& iso) {
  Pose p;
  p.position = iso.translation();
  p.orientation = Eigen::Quaterniond(iso.linear()).normalized();
  return p;
}

KinematicChain::KinematicChain(std::vector<Joint> joints, Eigen::Isometry3d base, Eigen::Isometry3d tool)
    : joints_(std::move(joints)), base_(base), tool_(tool) {
  if (joints_.empty()) {
    throw ConfigError("kinematic chain needs at least one joint");
  }
  for (const auto& j : joints_) {
    if (std::abs(j.axis.norm() - 1.0) > 1e-12) {
      throw ConfigError(fmt::format("joint '{}' axis must have unit norm (|axis| = {})", j.name, j.axis.norm()));
    }
    if (!(j.lower < j.upper)) {
      throw ConfigError(fmt::format("joint '{}' limits must satisfy lower < upper", j.name));
    }
    if (!j.origin.allFinite()) {
      throw ConfigError(fmt::format("joint '{}' origin must be finite", j.name));
    }
  }
}

JointVector KinematicChain::lower_limits() const {
  JointVector v(dof());
  for (int i = 0; i < dof(); ++i) v[i] = joints_[static_cast<std::size_t>(i)].lower;
  return v;
}

JointVector KinematicChain::upper_limits() const {
  JointVector v(dof());
  for (int i = 0; i < dof(); ++i) v[i] = joints_[static_cast<std::size_t>(i)].upper;
  return v;
}

JointVector KinematicChain::clamp(const JointVector& q) const {
  check_dimension(q);
  return q.cwiseMax(lower_limits()).cwiseMin(upper_limits());
}

bool KinematicChain::within_limits(const JointVector& q) const {
  check_dimension(q);
  for (int i = 0; i < dof(); ++i) {
    const auto& j = joints_[static_cast<std::size_t>(i)];
    if (!(q[i] >= j.lower && q[i] <= j.upper)) return false;
  }
  return true;
}

void KinematicChain::check_dimension(const JointVector& q) const {
  if (q.size() != dof()) {
    throw ArmError(ArmError::Kind::kDimensionMismatch,
                   fmt::format("joint vector has {} entries, chain has {} joints", q.size(), dof()));
  }
}

KinematicChain default_chain() {
  std::vector<Joint> joints = {
      {"waist", Eigen::Vector3d::UnitZ(), {0.0, 0.0, 0.127}, -3.14158, 3.14158},
      {"shoulder", Eigen::Vector3d::UnitY(), {0.0, 0.0, 0.050}, -1.85, 1.95},
      {"elbow", Eigen::Vector3d::UnitY(), {0.060, 0.0, 0.300}, -1.76, 1.60},
      {"wrist_angle", Eigen::Vector3d::UnitY(), {0.300, 0.0, 0.0}, -1.87, 2.15},
      {"wrist_rotate", Eigen::Vector3d::UnitX(), {0.070, 0.0, 0.0}, -3.14158, 3.14158},
  };
  Eigen::Isometry3d tool = Eigen::Isometry3d::Identity();
  tool.translation() = Eigen::Vector3d(0.100, 0.0, 0.0);
  return KinematicChain(std::move(joints), Eigen::Isometry3d::Identity(), tool);
}

ChainFrames chain_frames(const KinematicChain& chain, const JointVector& q) {
  chain.check_dimension(q);
  ChainFrames frames;
  frames.origins.reserve(static_cast<std::size_t>(chain.dof()));
  frames.axes.reserve(static_cast<std::size_t>(chain.dof()));
  Eigen::Isometry3d t = chain.base();
  for (int i = 0; i < chain.dof(); ++i) {
    const Joint& j = chain.joints()[static_cast<std::size_t>(i)];
    t.translate(j.origin);
    frames.origins.push_back(t.translation());
    frames.axes.push_back(t.linear() * j.axis);
    t.rotate(Eigen::AngleAxisd(q[i], j.axis));
  }
  frames.tool = t * chain.tool();
  return frames;
}

Pose forward_kinematics(const KinematicChain& chain, const JointVector& q) {
  return Pose::from_isometry(chain_frames(chain, q).tool);
}

Jacobian jacobian(const KinematicChain& chain, const JointVector& q) {
  const ChainFrames frames = chain_frames(chain, q);
  const Eigen::Vector3d p_tool = frames.tool.translation();
  Jacobian jac(6, chain.dof());
  for (int i = 0; i < chain.dof(); ++i) {
    const auto& z = frames.axes[static_cast<std::size_t>(i)];
    jac.block<3, 1>(0, i) = z.cross(p_tool - frames.origins[static_cast<std::size_t>(i)]);
    jac.block<3, 1>(3, i) = z;
  }
  return jac;
}

double orientation_error(const Pose& current, const Pose& target, const IkOptions& opts) {
  switch (opts.mode) {
    case OrientationMode::kPositionOnly:
      return 0.0;
    case OrientationMode::kApproachAxis: {
      const Eigen::Vector3d a = current.orientation * opts.approach_axis;
      const Eigen::Vector3d b = target.orientation * opts.approach_axis;
      return std::atan2(a.cross(b).norm(), a.dot(b));
    }
    case OrientationMode::kFull:
      return current.orientation.angularDistance(target.orientation);
  }
  return 0.0;
}

NoConvergence::NoConvergence(IkResult best)
    : std::runtime_error(fmt::format("IK did not converge after {} iterations (position error {} m, "
                                     "orientation error {} rad)",
                                     best.iterations, best.position_error, best.orientation_error)),
      best_(std::move(best)) {}

namespace {

// Task-space error and the matching Jacobian rows for the selected mode.
struct TaskError {
  Eigen::VectorXd err;
  double pos = 0.0;
  double rot = 0.0;
};

TaskError task_error(const KinematicChain& chain, const JointVector& q, const Pose& target,
                     const IkOptions& opts, Eigen::MatrixXd* jac_out) {
  const ChainFrames frames = chain_frames(chain, q);
  const Pose current = Pose::from_isometry(frames.tool);
  const Eigen::Vector3d dp = target.position - current.position;

  TaskError te;
  te.pos = dp.norm();
  te.rot = orientation_error(current, target, opts);

  Jacobian full;
  if (jac_out) full = jacobian(chain, q);

  switch (opts.mode) {
    case OrientationMode::kPositionOnly:
      te.err = dp;
      if (jac_out) *jac_out = full.topRows<3>();
      break;
    case OrientationMode::kApproachAxis: {
      // Residual b - a between unit approach axes; d(a) = omega x a = -[a]x omega.
      const Eigen::Vector3d a = current.orientation * opts.approach_axis;
      const Eigen::Vector3d b = target.orientation * opts.approach_axis;
      te.err.resize(6);
      te.err << dp, b - a;
      if (jac_out) {
        Eigen::Matrix3d a_hat;
        a_hat << 0.0, -a.z(), a.y(), a.z(), 0.0, -a.x(), -a.y(), a.x(), 0.0;
        jac_out->resize(6, chain.dof());
        jac_out->topRows<3>() = full.topRows<3>();
        jac_out->bottomRows<3>() = -a_hat * full.bottomRows<3>();
      }
      break;
    }
    case OrientationMode::kFull: {
      const Eigen::AngleAxisd aa(target.orientation * current.orientation.conjugate());
      te.err.resize(6);
      te.err << dp, aa.angle() * aa.axis();
      if (jac_out) *jac_out = full;
      break;
    }
  }
  return te;
}

bool converged(const TaskError& te, const IkOptions& opts) {
  return te.pos < opts.tol_pos && te.rot < opts.tol_rot;
}

}  // namespace

IkResult inverse_kinematics(const KinematicChain& chain, const Pose& target, const JointVector& seed,
                            const IkOptions& opts) {
  chain.check_dimension(seed);
  if (!target.position.allFinite() || !target.orientation.coeffs().allFinite()) {
    throw ArmError(ArmError::Kind::kInvalidTarget, "IK target pose must be finite");
  }

  IkResult result;
  result.q = chain.clamp(seed);
  Eigen::MatrixXd jac;
  TaskError current = task_error(chain, result.q, target, opts, &jac);
  result.residual_trace.push_back(current.err.norm());

  const double lambda2 = opts.damping * opts.damping;
  const Eigen::MatrixXd damping = lambda2 * Eigen::MatrixXd::Identity(chain.dof(), chain.dof());

  for (int iter = 0; iter < opts.max_iters && !converged(current, opts); ++iter) {
    // Joints pinned at a limit and pushed outward are frozen and the step re-solved.
    Eigen::VectorXd active = Eigen::VectorXd::Ones(chain.dof());
    Eigen::VectorXd dq;
    for (int pass = 0; pass <= chain.dof(); ++pass) {
      const Eigen::MatrixXd j_act = jac * active.asDiagonal();
      dq = (j_act.transpose() * j_act + damping).ldlt().solve(j_act.transpose() * current.err);
      bool changed = false;
      for (int i = 0; i < chain.dof(); ++i) {
        const auto& joint = chain.joints()[static_cast<std::size_t>(i)];
        const bool pinned = (result.q[i] <= joint.lower && dq[i] < 0.0) || (result.q[i] >= joint.upper && dq[i] > 0.0);
        if (active[i] > 0.0 && pinned) {
          active[i] = 0.0;
          changed = true;
        }
      }
      if (!changed) break;
    }

    // Backtrack from the full step until the error drops; after a full step
    // succeeds keep doubling while it still improves (progress near stretched
    // postures is otherwise too slow for max_iters).
    const JointVector q_prev = result.q;
    auto try_step = [&](double step) {
      const JointVector candidate = chain.clamp(q_prev + step * dq);
      Eigen::MatrixXd cand_jac;
      TaskError trial = task_error(chain, candidate, target, opts, &cand_jac);
      if (!(trial.err.norm() < current.err.norm())) return false;
      result.q = candidate;
      current = std::move(trial);
      jac = std::move(cand_jac);
      return true;
    };
    bool accepted = try_step(1.0);
    if (accepted) {
      for (double step = 2.0; step <= 64.0 && try_step(step); step *= 2.0) {
      }
    } else {
      for (double step = 0.5; step > 1e-6 && !accepted; step *= 0.5) accepted = try_step(step);
    }
    result.iterations = iter + 1;
    if (!accepted) break;  // stalled: no descent along the damped direction
    result.residual_trace.push_back(current.err.norm());
  }

  result.position_error = current.pos;
  result.orientation_error = current.rot;
  if (!converged(current, opts)) {
    throw NoConvergence(std::move(result));
  }
  return result;
}

}  // namespace tomharvest::arm
