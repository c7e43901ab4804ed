#pragma once

// Closed-chain finger linkage of the scotch-yoke gripper: position solution,
// contact-point kinematics and the virtual-work torque/force relation.
//
// Public angles are degrees, lengths are mm, forces N and torques N*mm.
// Internally all trigonometry and derivatives run in radians.

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tomharvest/common.hpp"

namespace tomharvest::mechanism {

/// Assembly mode of the coupler/rocker dyad. The two branches correspond to
/// the two signs of the law-of-cosines arccosine.
enum class Branch { kElbowUp, kElbowDown };

enum class DerivativeMethod { kAnalytic, kFiniteDifference };

/// kPrinted keeps only the horizontal contact-force work term (the canonical
/// torque law). kFullVirtualWork also includes the vertical P*dy_m term.
enum class TorqueModel { kPrinted, kFullVirtualWork };

class MechanismError : public std::runtime_error {
 public:
  enum class Kind { kNoAssembly, kDegenerateGeometry, kNearSingular, kOutOfRange, kInvalidArgument };

  MechanismError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct MechanismParams {
  double r = 20.0;     // crank radius
  double f = 40.0;     // slider-to-ground horizontal offset
  double a = 10.0;     // ground pivot x-offset
  double b = 5.0;      // ground pivot y-offset
  double c = 25.0;     // coupler base y-offset
  double d = 30.0;     // rocker link length
  double e = 35.0;     // coupler link length
  double l_s = 15.0;   // slider-to-D horizontal offset of the contact chain
  double l_p = 25.0;   // vertical offset of the contact chain
  double l_dm = 45.0;  // joint D to contact point M
  double theta_min_deg = 0.0;
  double theta_max_deg = 120.0;
  int finger_count = 6;

  /// Throws ConfigError naming the first violated invariant.
  void validate() const;

  /// Copy with every length multiplied by `s` (angles untouched).
  MechanismParams scaled(double s) const;

  bool in_range(double theta_deg) const;
};

struct FingerSolution {
  double theta = 0.0;  // deg
  double beta = 0.0;   // deg
  double xi = 0.0;     // deg
  double k = 0.0;      // mm
  double u = 0.0;      // deg
  double x_m = 0.0;    // mm
  double y_m = 0.0;    // mm
  Branch branch = Branch::kElbowUp;
};

struct ContactPoint {
  double x_m = 0.0;
  double y_m = 0.0;
};

struct ClosureResidual {
  double res_x = 0.0;
  double res_y = 0.0;
  double norm() const;
};

struct TorqueResult {
  double theta = 0.0;        // deg
  double force_p = 0.0;      // N
  double xi = 0.0;           // deg
  double dxi_dtheta = 0.0;   // rad/rad
  double torque_single = 0.0;  // N*mm
  double torque_total = 0.0;   // N*mm
};

/// Central-difference step used by the finite-difference derivative, in rad.
inline constexpr double kFdStepRad = 1e-5;
/// Distance of the law-of-cosines argument from +-1 below which the
/// configuration counts as a dead-centre (derivative is unbounded there).
inline constexpr double kNearSingularTol = 1e-9;

/// Solves the loop-closure equations at crank angle `theta_deg`.
///
/// With A = r cos(theta) + f - a and B = c - b, the diagonal has length
/// k = hypot(A, B) and direction u = atan2(B, A). Eliminating xi from the two
/// closure equations gives cos(beta + u) = (k^2 + e^2 - d^2) / (2 e k); the
/// branch picks the sign of the arccosine. xi is then recovered from the
/// closure equations themselves.
///
/// Throws MechanismError: kOutOfRange when theta is outside theta_range,
/// kNoAssembly when the dyad cannot close, kDegenerateGeometry when k ~ 0.
FingerSolution solve_finger_position(const MechanismParams& params, double theta_deg, Branch branch);

/// Same as solve_finger_position without the theta_range precondition. Used by
/// finite-difference stencils that step just past the range ends.
FingerSolution solve_finger_position_unchecked(const MechanismParams& params, double theta_deg,
                                               Branch branch);

ContactPoint contact_point(const MechanismParams& params, double theta_deg, double xi_deg);

ClosureResidual closure_residual(const MechanismParams& params, const FingerSolution& solution);

/// d(xi)/d(theta) in rad/rad. Throws kNearSingular at a dead-centre and
/// propagates assembly failures from the position solve.
double xi_derivative(const MechanismParams& params, double theta_deg, Branch branch,
                     DerivativeMethod method = DerivativeMethod::kAnalytic);

/// Motor torque holding grasp force `force_p` at one finger, plus the
/// finger_count total.
TorqueResult torque_single_finger(const MechanismParams& params, double theta_deg, double force_p,
                                  Branch branch, TorqueModel model = TorqueModel::kPrinted);

/// Torque at `steps` evenly spaced forces in [p_min, p_max].
std::vector<TorqueResult> force_torque_curve(const MechanismParams& params, double theta_deg,
                                             double p_min, double p_max, int steps, Branch branch,
                                             TorqueModel model = TorqueModel::kPrinted);

struct SweepSample {
  double theta = 0.0;
  std::optional<FingerSolution> solution;  // empty when the linkage cannot close
  double residual_norm = 0.0;
  double gamma_deg = 0.0;  // 180 - beta - xi
};

/// Number of samples produced for a sweep from start to end inclusive.
int sweep_count(double start_deg, double end_deg, double step_deg);

/// Solves the linkage at start, start + step, ... <= end. Unlike
/// solve_finger_position, assembly failures are recorded instead of thrown.
/// The branch is held fixed across the sweep, so the solution is continuous.
std::vector<SweepSample> sweep_positions(const MechanismParams& params, double start_deg,
                                         double end_deg, double step_deg, Branch branch,
                                         Exec exec = Exec::kParallel);

/// True when every theta of `params.theta_range` sampled at `step_deg`
/// assembles on `branch`.
bool assembles_over_range(const MechanismParams& params, Branch branch, double step_deg = 0.1);

std::string to_string(Branch branch);
Branch branch_from_string(const std::string& name);

}  // namespace tomharvest::mechanism
