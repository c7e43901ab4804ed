#include "tomharvest/mechanism.hpp"

#include <cmath>
#include <fmt/format.h>

namespace tomharvest::mechanism {

namespace {

constexpr double kDegenerateDiagonal = 1e-12;
constexpr double kRangeSlackDeg = 1e-9;

double branch_sign(Branch branch) { return branch == Branch::kElbowUp ? 1.0 : -1.0; }

// Intermediate quantities of the position solve, all in radians.
struct Loop {
  double theta, A, B, k, u, cos_arg, beta, xi;
};

Loop solve_loop(const MechanismParams& p, double theta, Branch branch) {
  Loop s{};
  s.theta = theta;
  s.A = p.r * std::cos(theta) + p.f - p.a;
  s.B = p.c - p.b;
  s.k = std::hypot(s.A, s.B);
  if (!(s.k >= kDegenerateDiagonal)) {
    throw MechanismError(MechanismError::Kind::kDegenerateGeometry,
                         fmt::format("diagonal length collapses at theta = {} deg", rad_to_deg(theta)));
  }
  s.u = std::atan2(s.B, s.A);
  s.cos_arg = (s.k * s.k + p.e * p.e - p.d * p.d) / (2.0 * p.e * s.k);
  if (std::abs(s.cos_arg) > 1.0) {
    throw MechanismError(MechanismError::Kind::kNoAssembly,
                         fmt::format("linkage cannot close at theta = {} deg (cosine argument {})",
                                     rad_to_deg(theta), s.cos_arg));
  }
  s.beta = branch_sign(branch) * std::acos(s.cos_arg) - s.u;
  s.xi = std::atan2(s.B + p.e * std::sin(s.beta), s.A - p.e * std::cos(s.beta));
  return s;
}

FingerSolution to_solution(const MechanismParams& p, const Loop& s, double theta_deg, Branch branch) {
  FingerSolution out;
  out.theta = theta_deg;
  out.beta = rad_to_deg(s.beta);
  out.xi = rad_to_deg(s.xi);
  out.k = s.k;
  out.u = rad_to_deg(s.u);
  out.x_m = p.r * std::cos(s.theta) + p.l_s + p.l_dm * std::cos(s.xi);
  out.y_m = p.l_p + p.l_dm * std::sin(s.xi);
  out.branch = branch;
  return out;
}

void check_range(const MechanismParams& p, double theta_deg) {
  if (!p.in_range(theta_deg)) {
    throw MechanismError(MechanismError::Kind::kOutOfRange,
                         fmt::format("theta = {} deg is outside theta_range [{}, {}]", theta_deg,
                                     p.theta_min_deg, p.theta_max_deg));
  }
}

void check_not_singular(const Loop& s) {
  if (1.0 - std::abs(s.cos_arg) < kNearSingularTol) {
    throw MechanismError(MechanismError::Kind::kNearSingular,
                         fmt::format("dead-centre configuration at theta = {} deg", rad_to_deg(s.theta)));
  }
}

double analytic_dxi(const MechanismParams& p, const Loop& s, Branch branch) {
  const double dA = -p.r * std::sin(s.theta);
  const double dk = s.A * dA / s.k;
  const double du = -s.B * dA / (s.k * s.k);
  const double dcos = dk * (s.k * s.k - p.e * p.e + p.d * p.d) / (2.0 * p.e * s.k * s.k);
  const double dbeta = -du - branch_sign(branch) * dcos / std::sqrt(1.0 - s.cos_arg * s.cos_arg);

  const double X = s.A - p.e * std::cos(s.beta);
  const double Y = s.B + p.e * std::sin(s.beta);
  const double dX = dA + p.e * std::sin(s.beta) * dbeta;
  const double dY = p.e * std::cos(s.beta) * dbeta;
  return (X * dY - Y * dX) / (X * X + Y * Y);
}

double fd_dxi(const MechanismParams& p, double theta, Branch branch) {
  const double xi_plus = solve_loop(p, theta + kFdStepRad, branch).xi;
  const double xi_minus = solve_loop(p, theta - kFdStepRad, branch).xi;
  return std::remainder(xi_plus - xi_minus, 2.0 * std::numbers::pi) / (2.0 * kFdStepRad);
}

}  // namespace

void MechanismParams::validate() const {
  const std::pair<const char*, double> lengths[] = {{"r", r}, {"f", f}, {"a", a}, {"b", b},
                                                     {"c", c}, {"d", d}, {"e", e}, {"l_s", l_s},
                                                     {"l_p", l_p}, {"l_DM", l_dm}};
  for (const auto& [name, value] : lengths) {
    if (!(std::isfinite(value) && value > 0.0)) {
      throw ConfigError(fmt::format("mechanism.{} must be a positive length, got {}", name, value));
    }
  }
  if (!(theta_min_deg >= 0.0 && theta_min_deg < 360.0 && theta_max_deg >= 0.0 && theta_max_deg < 360.0)) {
    throw ConfigError("mechanism theta_range must lie within [0, 360) deg");
  }
  if (!(theta_min_deg < theta_max_deg)) {
    throw ConfigError("mechanism theta_min_deg must be below theta_max_deg");
  }
  if (finger_count < 1) {
    throw ConfigError("mechanism.finger_count must be at least 1");
  }
}

MechanismParams MechanismParams::scaled(double s) const {
  MechanismParams out = *this;
  for (double* len : {&out.r, &out.f, &out.a, &out.b, &out.c, &out.d, &out.e, &out.l_s, &out.l_p, &out.l_dm}) {
    *len *= s;
  }
  return out;
}

bool MechanismParams::in_range(double theta_deg) const {
  return theta_deg >= theta_min_deg - kRangeSlackDeg && theta_deg <= theta_max_deg + kRangeSlackDeg;
}

double ClosureResidual::norm() const { return std::hypot(res_x, res_y); }

FingerSolution solve_finger_position_unchecked(const MechanismParams& params, double theta_deg,
                                               Branch branch) {
  const Loop s = solve_loop(params, deg_to_rad(theta_deg), branch);
  return to_solution(params, s, theta_deg, branch);
}

FingerSolution solve_finger_position(const MechanismParams& params, double theta_deg, Branch branch) {
  check_range(params, theta_deg);
  return solve_finger_position_unchecked(params, theta_deg, branch);
}

ContactPoint contact_point(const MechanismParams& params, double theta_deg, double xi_deg) {
  const double theta = deg_to_rad(theta_deg);
  const double xi = deg_to_rad(xi_deg);
  return {params.r * std::cos(theta) + params.l_s + params.l_dm * std::cos(xi),
          params.l_p + params.l_dm * std::sin(xi)};
}

ClosureResidual closure_residual(const MechanismParams& p, const FingerSolution& sol) {
  const double theta = deg_to_rad(sol.theta);
  const double beta = deg_to_rad(sol.beta);
  const double xi = deg_to_rad(sol.xi);
  return {p.r * std::cos(theta) + p.f - p.a - p.e * std::cos(beta) - p.d * std::cos(xi),
          p.c + p.e * std::sin(beta) - p.b - p.d * std::sin(xi)};
}

double xi_derivative(const MechanismParams& params, double theta_deg, Branch branch,
                     DerivativeMethod method) {
  const double theta = deg_to_rad(theta_deg);
  const Loop s = solve_loop(params, theta, branch);
  check_not_singular(s);
  if (method == DerivativeMethod::kAnalytic) {
    return analytic_dxi(params, s, branch);
  }
  return fd_dxi(params, theta, branch);
}

TorqueResult torque_single_finger(const MechanismParams& params, double theta_deg, double force_p,
                                  Branch branch, TorqueModel model) {
  if (!(std::isfinite(force_p) && force_p >= 0.0)) {
    throw MechanismError(MechanismError::Kind::kInvalidArgument,
                         fmt::format("grasp force must be finite and non-negative, got {}", force_p));
  }
  check_range(params, theta_deg);
  const Loop s = solve_loop(params, deg_to_rad(theta_deg), branch);
  check_not_singular(s);
  const double dxi = analytic_dxi(params, s, branch);

  // Virtual work: T dtheta + P dx_m (+ P dy_m) = 0 with x_m, y_m the contact point.
  double lever = params.l_dm * std::sin(s.xi) * dxi + params.r * std::sin(s.theta);
  if (model == TorqueModel::kFullVirtualWork) {
    lever -= params.l_dm * std::cos(s.xi) * dxi;
  }

  TorqueResult out;
  out.theta = theta_deg;
  out.force_p = force_p;
  out.xi = rad_to_deg(s.xi);
  out.dxi_dtheta = dxi;
  out.torque_single = force_p * lever;
  out.torque_total = static_cast<double>(params.finger_count) * out.torque_single;
  return out;
}

std::vector<TorqueResult> force_torque_curve(const MechanismParams& params, double theta_deg,
                                             double p_min, double p_max, int steps, Branch branch,
                                             TorqueModel model) {
  if (steps < 2) {
    throw MechanismError(MechanismError::Kind::kInvalidArgument, "force-torque curve needs at least 2 steps");
  }
  if (!(p_min <= p_max)) {
    throw MechanismError(MechanismError::Kind::kInvalidArgument, "force range must satisfy p_min <= p_max");
  }
  std::vector<TorqueResult> curve;
  curve.reserve(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    const double force = p_min + (p_max - p_min) * static_cast<double>(i) / static_cast<double>(steps - 1);
    curve.push_back(torque_single_finger(params, theta_deg, force, branch, model));
  }
  return curve;
}

int sweep_count(double start_deg, double end_deg, double step_deg) {
  if (!(step_deg > 0.0) || !(end_deg >= start_deg)) {
    throw MechanismError(MechanismError::Kind::kInvalidArgument,
                         "sweep needs step > 0 and end >= start");
  }
  return static_cast<int>(std::floor((end_deg - start_deg) / step_deg + 1e-9)) + 1;
}

namespace {

SweepSample sweep_sample(const MechanismParams& params, double theta_deg, Branch branch) {
  SweepSample sample;
  sample.theta = theta_deg;
  try {
    const FingerSolution sol = solve_finger_position_unchecked(params, theta_deg, branch);
    sample.residual_norm = closure_residual(params, sol).norm();
    sample.gamma_deg = 180.0 - sol.beta - sol.xi;
    sample.solution = sol;
  } catch (const MechanismError&) {
    sample.solution.reset();
  }
  return sample;
}

}  // namespace

std::vector<SweepSample> sweep_positions(const MechanismParams& params, double start_deg,
                                         double end_deg, double step_deg, Branch branch, Exec exec) {
  const int n = sweep_count(start_deg, end_deg, step_deg);
  std::vector<SweepSample> out(static_cast<std::size_t>(n));
  if (exec == Exec::kSerial) {
    for (int i = 0; i < n; ++i) {
      out[static_cast<std::size_t>(i)] = sweep_sample(params, start_deg + step_deg * i, branch);
    }
  } else {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      out[static_cast<std::size_t>(i)] = sweep_sample(params, start_deg + step_deg * i, branch);
    }
  }
  return out;
}

bool assembles_over_range(const MechanismParams& params, Branch branch, double step_deg) {
  for (const auto& s : sweep_positions(params, params.theta_min_deg, params.theta_max_deg, step_deg, branch)) {
    if (!s.solution) return false;
  }
  try {
    solve_finger_position_unchecked(params, params.theta_max_deg, branch);
  } catch (const MechanismError&) {
    return false;
  }
  return true;
}

std::string to_string(Branch branch) { return branch == Branch::kElbowUp ? "elbow_up" : "elbow_down"; }

Branch branch_from_string(const std::string& name) {
  if (name == "elbow_up") return Branch::kElbowUp;
  if (name == "elbow_down") return Branch::kElbowDown;
  throw ConfigError(fmt::format("unknown branch '{}' (expected elbow_up or elbow_down)", name));
}

}  // namespace tomharvest::mechanism
