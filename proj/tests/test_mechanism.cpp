#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "tomharvest/mechanism.hpp"

using namespace tomharvest;
using namespace tomharvest::mechanism;

namespace {

constexpr double kPi = std::numbers::pi;

double rad(double deg) { return deg * kPi / 180.0; }

// Minimum over xi of the closure residual for a fixed beta: the free end of
// the coupler must sit at distance d from the rocker pivot.
double closure_gap(const MechanismParams& p, double theta_deg, double beta_deg) {
  const double A = p.r * std::cos(rad(theta_deg)) + p.f - p.a;
  const double B = p.c - p.b;
  const double bx = A - p.e * std::cos(rad(beta_deg));
  const double by = B + p.e * std::sin(rad(beta_deg));
  return std::abs(std::hypot(bx, by) - p.d);
}

double x_m_at(const MechanismParams& p, double theta_deg, Branch br) {
  return solve_finger_position_unchecked(p, theta_deg, br).x_m;
}

double y_m_at(const MechanismParams& p, double theta_deg, Branch br) {
  return solve_finger_position_unchecked(p, theta_deg, br).y_m;
}

// Virtual-work oracle: T = -P dx_m/dtheta with a central difference in radians.
double torque_oracle(const MechanismParams& p, double theta_deg, double force, Branch br) {
  const double h = 1e-5;
  const double hd = h * 180.0 / kPi;
  return -force * (x_m_at(p, theta_deg + hd, br) - x_m_at(p, theta_deg - hd, br)) / (2.0 * h);
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST(Mechanism, DefaultsValidateAndAssembleOverRange) {
  MechanismParams p;
  EXPECT_NO_THROW(p.validate());
  EXPECT_TRUE(assembles_over_range(p, Branch::kElbowUp));
  EXPECT_TRUE(assembles_over_range(p, Branch::kElbowDown));
}

TEST(Mechanism, ValidateRejectsBadParams) {
  MechanismParams p;
  p.e = 0.0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = MechanismParams{};
  p.theta_min_deg = 50.0;
  p.theta_max_deg = 40.0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = MechanismParams{};
  p.finger_count = 0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = MechanismParams{};
  p.theta_max_deg = 360.0;
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(Mechanism, SolvedBetaMatchesGridScanMinimum) {
  const MechanismParams p;
  for (Branch br : {Branch::kElbowUp, Branch::kElbowDown}) {
    const FingerSolution s = solve_finger_position(p, 0.0, br);
    EXPECT_LT(closure_residual(p, s).norm(), 1e-9);

    // Dense scan: collect local minima of the closure gap over [0, 360).
    const double step = 1e-4;
    const int n = static_cast<int>(std::lround(360.0 / step));
    std::vector<double> minima;
    double prev2 = closure_gap(p, 0.0, -2 * step), prev = closure_gap(p, 0.0, -step);
    for (int i = 0; i <= n; ++i) {
      const double beta = i * step;
      const double cur = closure_gap(p, 0.0, beta);
      if (prev < prev2 && prev <= cur && prev < 1e-3) minima.push_back(beta - step);
      prev2 = prev;
      prev = cur;
    }
    ASSERT_EQ(minima.size(), 2U);
    const double solved = std::fmod(s.beta + 720.0, 360.0);
    double best = 1e9;
    for (double m : minima) best = std::min(best, std::abs(std::remainder(m - solved, 360.0)));
    EXPECT_LT(best, 2e-4) << "branch " << to_string(br);
  }
}

TEST(Mechanism, BranchesAreDistinctSolutions) {
  const MechanismParams p;
  const auto up = solve_finger_position(p, 30.0, Branch::kElbowUp);
  const auto down = solve_finger_position(p, 30.0, Branch::kElbowDown);
  EXPECT_GT(std::abs(std::remainder(up.beta - down.beta, 360.0)), 1.0);
  EXPECT_LT(closure_residual(p, up).norm(), 1e-9);
  EXPECT_LT(closure_residual(p, down).norm(), 1e-9);
}

TEST(Mechanism, KAndUFollowTheirDefinitions) {
  const MechanismParams p;
  for (double th : {0.0, 33.0, 90.0, 120.0}) {
    const auto s = solve_finger_position(p, th, Branch::kElbowUp);
    const double A = p.r * std::cos(rad(th)) + p.f - p.a;
    const double B = p.c - p.b;
    EXPECT_DOUBLE_EQ(s.k, std::sqrt(A * A + B * B));
    EXPECT_NEAR(s.u, std::atan2(B, A) * 180.0 / kPi, 1e-12);
    const auto cp = contact_point(p, th, s.xi);
    EXPECT_EQ(s.x_m, cp.x_m);
    EXPECT_EQ(s.y_m, cp.y_m);
  }
}

TEST(Mechanism, NoAssemblyWhenRockerTooLong) {
  MechanismParams p;
  const double A = p.r + p.f - p.a;
  const double k = std::hypot(A, p.c - p.b);
  p.d = k + p.e + 10.0;
  try {
    solve_finger_position(p, 0.0, Branch::kElbowUp);
    FAIL() << "expected NoAssembly";
  } catch (const MechanismError& e) {
    EXPECT_EQ(e.kind(), MechanismError::Kind::kNoAssembly);
  }
}

TEST(Mechanism, OutOfRangeThetaRejected) {
  const MechanismParams p;
  try {
    solve_finger_position(p, 130.0, Branch::kElbowUp);
    FAIL();
  } catch (const MechanismError& e) {
    EXPECT_EQ(e.kind(), MechanismError::Kind::kOutOfRange);
  }
}

TEST(Mechanism, DegenerateDiagonal) {
  // A = r cos(theta) + f - a = 0 and B = c - b = 0 at theta = 90.
  MechanismParams p;
  p.f = 10.0;
  p.a = 10.0;
  p.c = 5.0;
  p.b = 5.0;
  try {
    solve_finger_position_unchecked(p, 90.0, Branch::kElbowUp);
    FAIL();
  } catch (const MechanismError& e) {
    EXPECT_EQ(e.kind(), MechanismError::Kind::kDegenerateGeometry);
  }
}

TEST(Mechanism, ContactPointSimpleAngles) {
  const MechanismParams p;
  const auto a = contact_point(p, 90.0, 90.0);
  EXPECT_NEAR(a.x_m, p.l_s, 1e-12);
  EXPECT_NEAR(a.y_m, p.l_p + p.l_dm, 1e-12);
  const auto b = contact_point(p, 0.0, 0.0);
  EXPECT_DOUBLE_EQ(b.x_m, p.r + p.l_s + p.l_dm);
  EXPECT_DOUBLE_EQ(b.y_m, p.l_p);
}

TEST(Mechanism, ContactPointMatchesExtendedPrecision) {
  const MechanismParams p;
  const auto s = solve_finger_position(p, 30.0, Branch::kElbowUp);
  const long double pi = 3.141592653589793238462643383279502884L;
  const long double th = 30.0L * pi / 180.0L;
  const long double xi = static_cast<long double>(s.xi) * pi / 180.0L;
  const long double x = p.r * cosl(th) + p.l_s + p.l_dm * cosl(xi);
  const long double y = p.l_p + p.l_dm * sinl(xi);
  EXPECT_NEAR(s.x_m, static_cast<double>(x), 1e-12);
  EXPECT_NEAR(s.y_m, static_cast<double>(y), 1e-12);
}

TEST(Mechanism, ClosureResidualPerturbation) {
  const MechanismParams p;
  auto s = solve_finger_position(p, 40.0, Branch::kElbowUp);
  auto bumped = s;
  bumped.beta += 1.0;
  EXPECT_GT(closure_residual(p, bumped).norm(), 0.1);

  // Residual is linear in small beta perturbations.
  for (double delta : {0.01, 0.004, 0.001}) {
    auto big = s, half = s;
    big.beta += delta;
    half.beta += delta / 2.0;
    const double ratio = closure_residual(p, half).norm() / closure_residual(p, big).norm();
    EXPECT_NEAR(ratio, 0.5, 0.05);
  }
}

TEST(Mechanism, SweepResidualsAtOneDegree) {
  const MechanismParams p;
  for (Branch br : {Branch::kElbowUp, Branch::kElbowDown}) {
    const auto sweep = sweep_positions(p, p.theta_min_deg, p.theta_max_deg, 1.0, br);
    ASSERT_EQ(sweep.size(), 121U);
    for (const auto& s : sweep) {
      ASSERT_TRUE(s.solution.has_value());
      EXPECT_LT(s.residual_norm, 1e-9);
    }
  }
}

TEST(Mechanism, SweepSerialAndParallelIdentical) {
  const MechanismParams p;
  const auto a = sweep_positions(p, 0.0, 120.0, 0.1, Branch::kElbowUp, Exec::kSerial);
  const auto b = sweep_positions(p, 0.0, 120.0, 0.1, Branch::kElbowUp, Exec::kParallel);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].theta, b[i].theta);
    EXPECT_EQ(a[i].solution->beta, b[i].solution->beta);
    EXPECT_EQ(a[i].solution->xi, b[i].solution->xi);
    EXPECT_EQ(a[i].residual_norm, b[i].residual_norm);
  }
}

TEST(Mechanism, SweepCount) {
  EXPECT_EQ(sweep_count(0.0, 120.0, 0.1), 1201);
  EXPECT_EQ(sweep_count(0.0, 1.0, 0.3), 4);
  EXPECT_EQ(sweep_count(5.0, 5.0, 1.0), 1);
}

TEST(Mechanism, SweepAcrossAssemblyBoundaryRecordsFailures) {
  MechanismParams p;
  p.d = 40.0;  // closes only while k >= d - e
  p.e = 10.0;
  p.theta_max_deg = 180.0;
  const auto sweep = sweep_positions(p, 0.0, 180.0, 5.0, Branch::kElbowUp);
  int ok = 0, bad = 0;
  for (const auto& s : sweep) (s.solution ? ok : bad)++;
  EXPECT_GT(ok, 0);
  EXPECT_GT(bad, 0);
}

TEST(Mechanism, BranchContinuityOverFineSweep) {
  const MechanismParams p;
  for (Branch br : {Branch::kElbowUp, Branch::kElbowDown}) {
    const auto sweep = sweep_positions(p, p.theta_min_deg, p.theta_max_deg, 0.1, br);
    for (std::size_t i = 1; i < sweep.size(); ++i) {
      const double jump = std::abs(std::remainder(sweep[i].solution->beta - sweep[i - 1].solution->beta, 360.0));
      ASSERT_LT(jump, 5.0) << "at theta " << sweep[i].theta;
    }
  }
}

TEST(Mechanism, AnalyticDerivativeMatchesFiniteDifference) {
  const MechanismParams p;
  for (Branch br : {Branch::kElbowUp, Branch::kElbowDown}) {
    for (double th = 0.0; th <= 120.0; th += 7.5) {
      const double an = xi_derivative(p, th, br, DerivativeMethod::kAnalytic);
      const double fd = xi_derivative(p, th, br, DerivativeMethod::kFiniteDifference);
      EXPECT_LT(rel(an, fd), 1e-6) << "theta " << th;
    }
  }
}

TEST(Mechanism, FiniteDifferenceDefinition) {
  const MechanismParams p;
  const double h = 1e-5;
  const double hd = h * 180.0 / kPi;
  const double xp = solve_finger_position_unchecked(p, 45.0 + hd, Branch::kElbowUp).xi;
  const double xm = solve_finger_position_unchecked(p, 45.0 - hd, Branch::kElbowUp).xi;
  const double expected = rad(std::remainder(xp - xm, 360.0)) / (2.0 * h);
  EXPECT_NEAR(xi_derivative(p, 45.0, Branch::kElbowUp, DerivativeMethod::kFiniteDifference), expected, 1e-9);
}

TEST(Mechanism, DerivativeScaleInvariant) {
  const MechanismParams p;
  const auto q = p.scaled(2.0);
  for (double th : {10.0, 45.0, 100.0}) {
    const double a = xi_derivative(p, th, Branch::kElbowUp);
    const double b = xi_derivative(q, th, Branch::kElbowUp);
    EXPECT_NEAR(a, b, 1e-12 * std::abs(a));
  }
}

TEST(Mechanism, NearSingularAtDeadCentre) {
  // A = 30, B = 40 at theta = 90 gives k = 50 = e + d: the acos argument is exactly 1.
  MechanismParams p;
  p.r = 20.0;
  p.f = 40.0;
  p.a = 10.0;
  p.c = 45.0;
  p.b = 5.0;
  p.e = 35.0;
  p.d = 15.0;
  const double k = std::hypot(p.f - p.a, p.c - p.b);
  ASSERT_EQ((k * k + p.e * p.e - p.d * p.d) / (2.0 * p.e * k), 1.0);
  try {
    xi_derivative(p, 90.0, Branch::kElbowUp);
    FAIL() << "expected NearSingular";
  } catch (const MechanismError& e) {
    EXPECT_EQ(e.kind(), MechanismError::Kind::kNearSingular);
  }
}

TEST(Mechanism, TorqueMatchesVirtualWorkOracle) {
  const MechanismParams p;
  const auto t = torque_single_finger(p, 45.0, 5.0, Branch::kElbowUp);
  EXPECT_LT(rel(t.torque_single, torque_oracle(p, 45.0, 5.0, Branch::kElbowUp)), 1e-6);
}

TEST(Mechanism, TorqueRandomSamplesMatchOracle) {
  const MechanismParams p;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> th(0.0, 120.0), force(0.1, 20.0);
  for (int i = 0; i < 100; ++i) {
    const double t = th(rng), f = force(rng);
    const auto r = torque_single_finger(p, t, f, Branch::kElbowUp);
    EXPECT_LT(rel(r.torque_single, torque_oracle(p, t, f, Branch::kElbowUp)), 1e-6) << t << " " << f;
  }
}

TEST(Mechanism, FullVirtualWorkAddsVerticalTerm) {
  const MechanismParams p;
  const double h = 1e-5, hd = h * 180.0 / kPi;
  for (double th : {20.0, 60.0, 110.0}) {
    const auto full = torque_single_finger(p, th, 3.0, Branch::kElbowUp, TorqueModel::kFullVirtualWork);
    const double dx = (x_m_at(p, th + hd, Branch::kElbowUp) - x_m_at(p, th - hd, Branch::kElbowUp)) / (2 * h);
    const double dy = (y_m_at(p, th + hd, Branch::kElbowUp) - y_m_at(p, th - hd, Branch::kElbowUp)) / (2 * h);
    EXPECT_LT(rel(full.torque_single, -3.0 * (dx + dy)), 1e-6);
  }
}

TEST(Mechanism, ZeroForceZeroTorque) {
  const MechanismParams p;
  for (double th : {0.0, 45.0, 120.0}) {
    const auto r = torque_single_finger(p, th, 0.0, Branch::kElbowUp);
    EXPECT_EQ(r.torque_single, 0.0);
    EXPECT_EQ(r.torque_total, 0.0);
  }
}

TEST(Mechanism, ThetaZeroDropsCrankTerm) {
  const MechanismParams p;
  const auto r = torque_single_finger(p, 0.0, 4.0, Branch::kElbowUp);
  EXPECT_EQ(r.torque_single, 4.0 * p.l_dm * std::sin(rad(r.xi)) * r.dxi_dtheta);
}

TEST(Mechanism, TotalIsFingerCountTimesSingle) {
  MechanismParams p;
  for (int fingers : {1, 6, 7}) {
    p.finger_count = fingers;
    for (double th = 0.0; th <= 120.0; th += 5.0) {
      const auto r = torque_single_finger(p, th, 2.5, Branch::kElbowUp);
      EXPECT_EQ(r.torque_total, fingers * r.torque_single);
    }
  }
}

TEST(Mechanism, TorqueHomogeneousInForceAndLength) {
  const MechanismParams p;
  for (double th : {15.0, 75.0}) {
    const auto one = torque_single_finger(p, th, 3.0, Branch::kElbowUp);
    const auto two = torque_single_finger(p, th, 6.0, Branch::kElbowUp);
    EXPECT_NEAR(two.torque_single, 2.0 * one.torque_single, 1e-12 * std::abs(one.torque_single));
    const auto scaled = torque_single_finger(p.scaled(3.0), th, 3.0, Branch::kElbowUp);
    EXPECT_NEAR(scaled.torque_single, 3.0 * one.torque_single, 1e-10 * std::abs(one.torque_single));
  }
}

TEST(Mechanism, ForceCurveIsLineThroughOrigin) {
  const MechanismParams p;
  const auto curve = force_torque_curve(p, 45.0, 0.0, 20.0, 21, Branch::kElbowUp);
  ASSERT_EQ(curve.size(), 21U);
  const double unit = torque_single_finger(p, 45.0, 1.0, Branch::kElbowUp).torque_single;
  double sxy = 0, sxx = 0;
  for (const auto& r : curve) {
    sxy += r.force_p * r.torque_single;
    sxx += r.force_p * r.force_p;
  }
  const double slope = sxy / sxx;
  EXPECT_NEAR(slope, unit, 1e-12 * std::abs(unit));
  for (const auto& r : curve) EXPECT_NEAR(r.torque_single, slope * r.force_p, 1e-12 * std::abs(unit) * 20.0);
  EXPECT_EQ(curve.front().force_p, 0.0);
  EXPECT_EQ(curve.back().force_p, 20.0);
}

TEST(Mechanism, ForceCurveDegenerateRange) {
  const MechanismParams p;
  const auto curve = force_torque_curve(p, 45.0, 5.0, 5.0, 4, Branch::kElbowUp);
  for (const auto& r : curve) EXPECT_EQ(r.torque_single, curve.front().torque_single);
  EXPECT_THROW(force_torque_curve(p, 45.0, 6.0, 5.0, 4, Branch::kElbowUp), MechanismError);
  EXPECT_THROW(force_torque_curve(p, 45.0, 0.0, 5.0, 1, Branch::kElbowUp), MechanismError);
}

TEST(Mechanism, NegativeForceRejected) {
  const MechanismParams p;
  EXPECT_THROW(torque_single_finger(p, 45.0, -1.0, Branch::kElbowUp), MechanismError);
}

TEST(Mechanism, BranchNames) {
  EXPECT_EQ(branch_from_string("elbow_up"), Branch::kElbowUp);
  EXPECT_EQ(branch_from_string("elbow_down"), Branch::kElbowDown);
  EXPECT_EQ(to_string(Branch::kElbowDown), "elbow_down");
  EXPECT_THROW(branch_from_string("sideways"), ConfigError);
}
