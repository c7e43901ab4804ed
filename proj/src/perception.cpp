#include "tomharvest/perception.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fmt/format.h>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>

#include <json.hpp>

#include "tomharvest/common.hpp"

namespace tomharvest::perception {

using nlohmann::json;

namespace {

[[noreturn]] void invalid(std::size_t index, const std::string& field, const std::string& why) {
  throw PerceptionError(PerceptionError::Kind::kValidationError,
                        fmt::format("detection record {}: field '{}' {}", index, field, why));
}

double number_at(const json& j, std::size_t index, const std::string& field) {
  if (!j.is_number()) invalid(index, field, "must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) invalid(index, field, "must be finite");
  return v;
}

double unit_interval(const json& j, std::size_t index, const std::string& field) {
  const double v = number_at(j, index, field);
  if (v < 0.0 || v > 1.0) invalid(index, field, fmt::format("= {} is outside [0, 1]", v));
  return v;
}

Keypoint parse_keypoint(const json& j, std::size_t index, const std::string& field,
                        const std::optional<std::pair<int, int>>& image_size) {
  if (!j.is_array() || j.size() != 3) invalid(index, field, "must be [u, v, confidence]");
  Keypoint kp{number_at(j[0], index, field + ".u"), number_at(j[1], index, field + ".v"),
              unit_interval(j[2], index, field + ".confidence")};
  if (image_size) {
    const auto [w, h] = *image_size;
    if (kp.u < 0.0 || kp.u >= w || kp.v < 0.0 || kp.v >= h) {
      invalid(index, field, fmt::format("({}, {}) lies outside the {}x{} image", kp.u, kp.v, w, h));
    }
  }
  return kp;
}

DetectionRecord parse_record(const json& j, std::size_t index, const std::optional<std::pair<int, int>>& image_size) {
  static const std::set<std::string> kKeys = {"class", "score", "bbox", "mask", "keypoints"};
  if (!j.is_object()) invalid(index, "<record>", "must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kKeys.contains(key)) invalid(index, key, "is not a known field");
  }
  for (const char* required : {"class", "score", "bbox", "keypoints"}) {
    if (!j.contains(required)) invalid(index, required, "is missing");
  }

  DetectionRecord rec;
  const json& cls = j.at("class");
  if (cls == "ripe") {
    rec.ripeness = Ripeness::kRipe;
  } else if (cls == "unripe") {
    rec.ripeness = Ripeness::kUnripe;
  } else {
    invalid(index, "class", "must be \"ripe\" or \"unripe\"");
  }
  rec.score = unit_interval(j.at("score"), index, "score");

  const json& bbox = j.at("bbox");
  if (!bbox.is_array() || bbox.size() != 4) invalid(index, "bbox", "must hold 4 numbers");
  rec.bbox = {number_at(bbox[0], index, "bbox"), number_at(bbox[1], index, "bbox"),
              number_at(bbox[2], index, "bbox"), number_at(bbox[3], index, "bbox")};
  if (!(rec.bbox.u_min < rec.bbox.u_max) || !(rec.bbox.v_min < rec.bbox.v_max)) {
    invalid(index, "bbox", "must satisfy min < max on both axes");
  }

  if (j.contains("mask")) {
    const json& mask = j.at("mask");
    if (!mask.is_array()) invalid(index, "mask", "must be an array of [u, v] vertices");
    for (const auto& vert : mask) {
      if (!vert.is_array() || vert.size() != 2) invalid(index, "mask", "vertices must be [u, v]");
      rec.mask.emplace_back(number_at(vert[0], index, "mask"), number_at(vert[1], index, "mask"));
    }
  }

  const json& kps = j.at("keypoints");
  if (!kps.is_object() || !kps.contains("center") || !kps.contains("pedicel")) {
    invalid(index, "keypoints", "must contain center and pedicel");
  }
  for (const auto& [key, _] : kps.items()) {
    if (key != "center" && key != "pedicel") invalid(index, "keypoints." + key, "is not a known keypoint");
  }
  rec.center = parse_keypoint(kps.at("center"), index, "keypoints.center", image_size);
  rec.pedicel = parse_keypoint(kps.at("pedicel"), index, "keypoints.pedicel", image_size);
  return rec;
}

template <typename T>
T to_little_endian(T value) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return value;
}

template <typename T>
T read_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return to_little_endian(v);
}

template <typename T>
void write_le(std::ostream& os, T v) {
  v = to_little_endian(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

bool valid_depth(float z) { return std::isfinite(z) && z > 0.0f; }

}  // namespace

void CameraModel::validate() const {
  if (!(fx > 0.0 && fy > 0.0)) throw ConfigError("camera fx and fy must be > 0");
  if (width <= 0 || height <= 0) throw ConfigError("camera width and height must be > 0");
  if (!(cx > 0.0 && cx < width && cy > 0.0 && cy < height)) {
    throw ConfigError("camera principal point must lie strictly inside the image");
  }
  if (std::abs(rotation.norm() - 1.0) > 1e-9) throw ConfigError("camera extrinsic quaternion must have unit norm");
  if (!translation.allFinite()) throw ConfigError("camera extrinsic translation must be finite");
  if (!(depth_scale > 0.0)) throw ConfigError("camera depth_scale must be > 0");
}

std::vector<DetectionRecord> parse_detections(const std::string& json_text,
                                              std::optional<std::pair<int, int>> image_size) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw PerceptionError(PerceptionError::Kind::kParseError,
                          fmt::format("detection file is not valid JSON (byte {}): {}", e.byte, e.what()));
  }
  if (!doc.is_array()) {
    throw PerceptionError(PerceptionError::Kind::kParseError, "detection file must hold a top-level JSON array");
  }
  std::vector<DetectionRecord> out;
  out.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) out.push_back(parse_record(doc[i], i, image_size));
  return out;
}

std::vector<DetectionRecord> load_detections(const std::filesystem::path& path,
                                             std::optional<std::pair<int, int>> image_size) {
  std::ifstream in(path);
  if (!in) {
    throw PerceptionError(PerceptionError::Kind::kParseError,
                          fmt::format("cannot open detection file {}", path.string()));
  }
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_detections(text, image_size);
}

DepthFrame load_depth_frame(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw PerceptionError(PerceptionError::Kind::kParseError, fmt::format("cannot open depth file {}", path.string()));
  }
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (bytes.size() < 16 || bytes.compare(0, 4, "DPTH") != 0) {
    throw PerceptionError(PerceptionError::Kind::kParseError, "depth file lacks the DPTH header");
  }
  DepthFrame frame;
  frame.width = read_le<std::uint32_t>(bytes.data() + 4);
  frame.height = read_le<std::uint32_t>(bytes.data() + 8);
  const std::size_t count = static_cast<std::size_t>(frame.width) * frame.height;
  if (frame.width == 0 || frame.height == 0 || bytes.size() != 16 + count * sizeof(float)) {
    throw PerceptionError(PerceptionError::Kind::kParseError,
                          fmt::format("depth file size {} does not match {}x{} float32 payload", bytes.size(),
                                      frame.width, frame.height));
  }
  frame.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) frame.data[i] = read_le<float>(bytes.data() + 16 + i * sizeof(float));
  return frame;
}

void save_depth_frame(const std::filesystem::path& path, const DepthFrame& frame) {
  if (frame.data.size() != static_cast<std::size_t>(frame.width) * frame.height) {
    throw PerceptionError(PerceptionError::Kind::kValidationError, "depth frame data does not match its size");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw PerceptionError(PerceptionError::Kind::kParseError, fmt::format("cannot write depth file {}", path.string()));
  }
  out.write("DPTH", 4);
  write_le<std::uint32_t>(out, frame.width);
  write_le<std::uint32_t>(out, frame.height);
  write_le<std::uint32_t>(out, 0);
  for (float z : frame.data) write_le<float>(out, z);
}

Eigen::Vector3d pixel_to_camera(const CameraModel& cam, double u, double v, double depth_raw) {
  const double z = depth_raw * cam.depth_scale;
  if (!(std::isfinite(z) && z > 0.0) || !std::isfinite(u) || !std::isfinite(v)) {
    throw PerceptionError(PerceptionError::Kind::kInvalidDepth,
                          fmt::format("cannot back-project pixel ({}, {}) with depth {}", u, v, depth_raw));
  }
  return {(u - cam.cx) * z / cam.fx, (v - cam.cy) * z / cam.fy, z};
}

Eigen::Vector3d camera_to_pixel(const CameraModel& cam, const Eigen::Vector3d& p) {
  return {cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy, p.z() / cam.depth_scale};
}

Eigen::Vector3d camera_to_base(const CameraModel& cam, const Eigen::Vector3d& p_cam) {
  return cam.rotation * p_cam + cam.translation;
}

Eigen::Vector3d base_to_camera(const CameraModel& cam, const Eigen::Vector3d& p_base) {
  return cam.rotation.conjugate() * (p_base - cam.translation);
}

double sample_depth(const DepthFrame& frame, double u, double v, int window) {
  const double ur = std::round(u);
  const double vr = std::round(v);
  if (!(ur >= 0.0 && vr >= 0.0 && ur < frame.width && vr < frame.height)) {
    throw PerceptionError(PerceptionError::Kind::kOutOfBounds,
                          fmt::format("pixel ({}, {}) is outside the {}x{} depth frame", u, v, frame.width, frame.height));
  }
  const auto ui = static_cast<long>(ur);
  const auto vi = static_cast<long>(vr);
  const long w = std::max(window, 0);
  const long u0 = std::max(0L, ui - w), u1 = std::min<long>(frame.width - 1, ui + w);
  const long v0 = std::max(0L, vi - w), v1 = std::min<long>(frame.height - 1, vi + w);

  std::vector<double> values;
  values.reserve(static_cast<std::size_t>((2 * w + 1) * (2 * w + 1)));
  for (long row = v0; row <= v1; ++row) {
    for (long col = u0; col <= u1; ++col) {
      const float z = frame.at(static_cast<std::uint32_t>(col), static_cast<std::uint32_t>(row));
      if (valid_depth(z)) values.push_back(z);
    }
  }
  if (values.empty()) {
    throw PerceptionError(PerceptionError::Kind::kNoValidDepth,
                          fmt::format("no valid depth around pixel ({}, {})", u, v));
  }
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

TargetTomato build_target(const DetectionRecord& record, const CameraModel& cam, const DepthFrame& depth,
                          const TargetOptions& opts) {
  if (record.center.confidence < opts.confidence_threshold) {
    throw PerceptionError(PerceptionError::Kind::kLowConfidence, "center");
  }
  if (record.pedicel.confidence < opts.confidence_threshold) {
    throw PerceptionError(PerceptionError::Kind::kLowConfidence, "pedicel");
  }

  const double center_raw = sample_depth(depth, record.center.u, record.center.v, opts.depth_window);
  const double pedicel_raw = sample_depth(depth, record.pedicel.u, record.pedicel.v, opts.depth_window);
  const Eigen::Vector3d center_cam = pixel_to_camera(cam, record.center.u, record.center.v, center_raw);
  const Eigen::Vector3d pedicel_cam = pixel_to_camera(cam, record.pedicel.u, record.pedicel.v, pedicel_raw);

  TargetTomato t;
  t.center_3d = camera_to_base(cam, center_cam);
  t.pedicel_3d = camera_to_base(cam, pedicel_cam);
  t.ripeness = record.ripeness;
  t.estimated_radius = record.bbox.width() * center_cam.z() / (2.0 * cam.fx);
  if (!t.center_3d.allFinite() || !t.pedicel_3d.allFinite() || !std::isfinite(t.estimated_radius)) {
    throw PerceptionError(PerceptionError::Kind::kValidationError, "lifted target is not finite");
  }
  if (t.pedicel_3d == t.center_3d) {
    throw PerceptionError(PerceptionError::Kind::kValidationError, "pedicel and centre lift to the same point");
  }
  if (!(t.estimated_radius > 0.0)) {
    throw PerceptionError(PerceptionError::Kind::kValidationError, "estimated radius must be > 0");
  }
  return t;
}

TargetTomato select_target(const std::vector<DetectionRecord>& records, const CameraModel& cam,
                           const DepthFrame& depth, SelectionPolicy policy, const TargetOptions& opts) {
  std::optional<TargetTomato> best;
  double best_key = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const DetectionRecord& rec = records[i];
    if (rec.ripeness != Ripeness::kRipe) continue;
    TargetTomato candidate;
    try {
      candidate = build_target(rec, cam, depth, opts);
    } catch (const PerceptionError&) {
      continue;
    }
    candidate.source_index = i;
    // Smaller key wins; strict comparison keeps the lowest index on ties.
    const double key = policy == SelectionPolicy::kRipestNearest ? candidate.center_3d.norm() : -rec.score;
    if (key < best_key) {
      best_key = key;
      best = candidate;
    }
  }
  if (!best) {
    throw PerceptionError(PerceptionError::Kind::kNoRipeTarget, "no ripe detection yields a valid target");
  }
  return *best;
}

std::string to_string(Ripeness r) { return r == Ripeness::kRipe ? "ripe" : "unripe"; }

SelectionPolicy policy_from_string(const std::string& name) {
  if (name == "ripest_nearest") return SelectionPolicy::kRipestNearest;
  if (name == "highest_score") return SelectionPolicy::kHighestScore;
  throw ConfigError(fmt::format("unknown selection policy '{}'", name));
}

}  // namespace tomharvest::perception
