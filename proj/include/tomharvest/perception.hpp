#pragma once

// Lifting precomputed 2D detections (ripeness class, bbox, centre and pedicel
// keypoints) into 3D harvest targets in the robot base frame.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace tomharvest::perception {

enum class Ripeness { kRipe, kUnripe };
enum class SelectionPolicy { kRipestNearest, kHighestScore };

class PerceptionError : public std::runtime_error {
 public:
  enum class Kind { kParseError, kValidationError, kInvalidDepth, kNoValidDepth, kLowConfidence, kNoRipeTarget,
                    kOutOfBounds };

  PerceptionError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct Keypoint {
  double u = 0.0;
  double v = 0.0;
  double confidence = 0.0;
};

struct BoundingBox {
  double u_min = 0.0, v_min = 0.0, u_max = 0.0, v_max = 0.0;
  double width() const { return u_max - u_min; }
};

struct DetectionRecord {
  Ripeness ripeness = Ripeness::kRipe;
  double score = 0.0;
  BoundingBox bbox;
  std::vector<std::pair<double, double>> mask;  // optional polygon, may be empty
  Keypoint center;
  Keypoint pedicel;
};

struct CameraModel {
  double fx = 600.0, fy = 600.0;
  double cx = 320.0, cy = 240.0;
  int width = 640, height = 480;
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();  // camera -> base
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();         // camera origin in base, m
  double depth_scale = 1.0;                                      // m per raw depth unit

  void validate() const;
};

/// Row-major depth image; at(u, v) addresses column u of row v.
struct DepthFrame {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<float> data;

  float at(std::uint32_t u, std::uint32_t v) const { return data[static_cast<std::size_t>(v) * width + u]; }
};

struct TargetTomato {
  Eigen::Vector3d center_3d = Eigen::Vector3d::Zero();
  Eigen::Vector3d pedicel_3d = Eigen::Vector3d::Zero();
  Ripeness ripeness = Ripeness::kRipe;
  double estimated_radius = 0.0;
  std::size_t source_index = 0;  // index of the record it was built from
};

/// Parses a JSON array of detection records. Throws kParseError for
/// malformed JSON and kValidationError naming the field and record index.
/// When `image_size` is given keypoints must also lie inside the image.
std::vector<DetectionRecord> load_detections(const std::filesystem::path& path,
                                             std::optional<std::pair<int, int>> image_size = std::nullopt);
std::vector<DetectionRecord> parse_detections(const std::string& json_text,
                                              std::optional<std::pair<int, int>> image_size = std::nullopt);

/// Depth frame file: "DPTH", u32 width, u32 height, u32 reserved (all
/// little-endian), then width*height little-endian float32 depths in metres.
DepthFrame load_depth_frame(const std::filesystem::path& path);
void save_depth_frame(const std::filesystem::path& path, const DepthFrame& frame);

Eigen::Vector3d pixel_to_camera(const CameraModel& cam, double u, double v, double depth_raw);
/// Inverse of pixel_to_camera for a camera-frame point with z > 0: (u, v, depth_raw).
Eigen::Vector3d camera_to_pixel(const CameraModel& cam, const Eigen::Vector3d& p_cam);

Eigen::Vector3d camera_to_base(const CameraModel& cam, const Eigen::Vector3d& p_cam);
Eigen::Vector3d base_to_camera(const CameraModel& cam, const Eigen::Vector3d& p_base);

/// Median of the finite, positive depths in the (2*window+1)^2 neighbourhood
/// of the pixel nearest (u, v), clipped to the frame.
double sample_depth(const DepthFrame& frame, double u, double v, int window);

struct TargetOptions {
  double confidence_threshold = 0.5;
  int depth_window = 2;
};

TargetTomato build_target(const DetectionRecord& record, const CameraModel& cam, const DepthFrame& depth,
                          const TargetOptions& opts = {});

/// Picks among ripe records that yield a valid target. Ties go to the lowest
/// record index. Throws kNoRipeTarget if none qualifies.
TargetTomato select_target(const std::vector<DetectionRecord>& records, const CameraModel& cam,
                           const DepthFrame& depth, SelectionPolicy policy, const TargetOptions& opts = {});

std::string to_string(Ripeness r);
SelectionPolicy policy_from_string(const std::string& name);

}  // namespace tomharvest::perception
