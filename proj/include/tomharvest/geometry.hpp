#pragma once

#include <Eigen/Core>

namespace tomharvest::geometry {

/// Parameter t in [0, 1] of the point on segment [a, b] closest to p.
double closest_segment_param(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& p);

double point_segment_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a, const Eigen::Vector3d& b);

/// Minimum distance between segments [p0, p1] and [q0, q1]. Handles
/// degenerate (zero-length) and parallel segments.
double segment_segment_distance(const Eigen::Vector3d& p0, const Eigen::Vector3d& p1,
                                const Eigen::Vector3d& q0, const Eigen::Vector3d& q1);

}  // namespace tomharvest::geometry
