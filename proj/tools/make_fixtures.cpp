// make_fixtures: regenerates the shipped config and perception fixtures.
//
//   make_fixtures <repo root>
//
// Writes config/default.json, data/detections.json, data/detections_unripe.json
// and data/depth.dpth. The scene is described once in the base frame; detection
// records and the depth image are rendered from it through the camera model.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tomharvest/config.hpp"
#include "tomharvest/planner.hpp"

using namespace tomharvest;
using nlohmann::json;

namespace {

struct Fruit {
  Eigen::Vector3d center;
  Eigen::Vector3d pedicel;
  double radius;
  bool ripe;
  double score;
};

constexpr float kBackground = 1.5F;

perception::CameraModel make_camera() {
  perception::CameraModel cam;
  // Camera above the base looking along +x: image right = -y, image down = -z.
  Eigen::Matrix3d r;
  r << 0, 0, 1, -1, 0, 0, 0, -1, 0;
  cam.rotation = Eigen::Quaterniond(r);
  cam.translation = {0.0, 0.0, 0.45};
  return cam;
}

// Pedicel direction inside the waist plane of the fruit, tilted up by `elev`.
Eigen::Vector3d pedicel_dir(const Eigen::Vector3d& c, double elev) {
  Eigen::Vector3d h(c.x(), c.y(), 0.0);
  h.normalize();
  return (std::cos(elev) * h + std::sin(elev) * Eigen::Vector3d::UnitZ()).normalized();
}

std::vector<Fruit> make_fruits() {
  std::vector<Fruit> f;
  auto add = [&](Eigen::Vector3d c, double elev, double radius, bool ripe, double score) {
    f.push_back({c, c + 0.045 * pedicel_dir(c, elev), radius, ripe, score});
  };
  add({0.42, 0.06, 0.40}, std::atan2(0.6, 0.8), 0.035, true, 0.91);  // target
  add({0.54, -0.16, 0.36}, 0.8, 0.033, true, 0.97);                   // farther ripe fruit
  add({0.44, -0.07, 0.50}, 0.8, 0.030, false, 0.88);                  // unripe neighbour
  return f;
}

json keypoint(const perception::CameraModel& cam, const Eigen::Vector3d& p, double conf) {
  const Eigen::Vector3d px = perception::camera_to_pixel(cam, perception::base_to_camera(cam, p));
  return json::array({px.x(), px.y(), conf});
}

json record(const perception::CameraModel& cam, const Fruit& fr, bool force_unripe) {
  const Eigen::Vector3d pc = perception::base_to_camera(cam, fr.center);
  const Eigen::Vector3d px = perception::camera_to_pixel(cam, pc);
  const double r_px = fr.radius * cam.fx / pc.z();
  return {{"class", (fr.ripe && !force_unripe) ? "ripe" : "unripe"},
          {"score", fr.score},
          {"bbox", json::array({px.x() - r_px, px.y() - r_px, px.x() + r_px, px.y() + r_px})},
          {"keypoints", {{"center", keypoint(cam, fr.center, 0.95)}, {"pedicel", keypoint(cam, fr.pedicel, 0.8)}}}};
}

// Fronto-parallel discs at each fruit's centre depth plus a 7x7 pedicel patch,
// drawn far to near so nearer fruit occlude.
perception::DepthFrame render_depth(const perception::CameraModel& cam, std::vector<Fruit> fruits) {
  perception::DepthFrame frame;
  frame.width = static_cast<std::uint32_t>(cam.width);
  frame.height = static_cast<std::uint32_t>(cam.height);
  frame.data.assign(static_cast<std::size_t>(frame.width) * frame.height, kBackground);
  auto put = [&](long u, long v, double z) {
    if (u < 0 || v < 0 || u >= cam.width || v >= cam.height) return;
    frame.data[static_cast<std::size_t>(v) * frame.width + static_cast<std::size_t>(u)] = static_cast<float>(z);
  };
  std::sort(fruits.begin(), fruits.end(), [&](const Fruit& a, const Fruit& b) {
    return perception::base_to_camera(cam, a.center).z() > perception::base_to_camera(cam, b.center).z();
  });
  for (const auto& fr : fruits) {
    const Eigen::Vector3d c = perception::base_to_camera(cam, fr.center);
    const Eigen::Vector3d px = perception::camera_to_pixel(cam, c);
    const double r_px = fr.radius * cam.fx / c.z();
    for (long v = std::lround(px.y() - r_px); v <= std::lround(px.y() + r_px); ++v) {
      for (long u = std::lround(px.x() - r_px); u <= std::lround(px.x() + r_px); ++u) {
        if (std::hypot(u - px.x(), v - px.y()) <= r_px) put(u, v, c.z());
      }
    }
    const Eigen::Vector3d p = perception::base_to_camera(cam, fr.pedicel);
    const Eigen::Vector3d ppx = perception::camera_to_pixel(cam, p);
    const long pu = std::lround(ppx.x()), pv = std::lround(ppx.y());
    for (long dv = -3; dv <= 3; ++dv) {
      for (long du = -3; du <= 3; ++du) put(pu + du, pv + dv, p.z());
    }
  }
  return frame;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2 || argv[1][0] == '-') {
    std::cerr << "usage: make_fixtures <repo root>\n";
    return 1;
  }
  const std::filesystem::path root = argv[1];
  std::filesystem::create_directories(root / "config");
  std::filesystem::create_directories(root / "data");

  const auto cam = make_camera();
  const auto fruits = make_fruits();

  config::RunConfig cfg = config::parse_run_config(json::object());
  cfg.camera = cam;
  cfg.scene.workspace_bounds.min = {-0.8, -0.8, 0.0};
  cfg.scene.workspace_bounds.max = {0.8, 0.8, 1.0};
  // Every fruit other than the target is an obstacle, as is the truss stem.
  for (std::size_t i = 1; i < fruits.size(); ++i) {
    cfg.scene.spheres.push_back({fruits[i].center, fruits[i].radius, planner::SphereTag::kTomato});
  }
  cfg.scene.capsules.push_back({{0.50, 0.075, 0.47}, {0.50, 0.075, 0.85}, 0.008, planner::CapsuleTag::kStem});
  // Foliage across the straight joint-space path from home to the punnet.
  const arm::JointVector home = cfg.pick_cycle.home, punnet = cfg.pick_cycle.punnet;
  const auto mid = planner::arm_polyline(cfg.chain, 0.5 * (home + punnet));
  cfg.scene.spheres.push_back({mid[4], 0.06, planner::SphereTag::kOther});
  cfg.plan_start = home;
  cfg.plan_goal = punnet;
  cfg.validate();

  json doc = config::to_json(cfg);
  doc["io"] = {{"detections", "../data/detections.json"}, {"depth", "../data/depth.dpth"}};
  write_text(root / "config" / "default.json", doc.dump(2) + "\n");

  json dets = json::array(), unripe = json::array();
  for (const auto& fr : fruits) {
    dets.push_back(record(cam, fr, false));
    unripe.push_back(record(cam, fr, true));
  }
  write_text(root / "data" / "detections.json", dets.dump(2) + "\n");
  write_text(root / "data" / "detections_unripe.json", unripe.dump(2) + "\n");
  perception::save_depth_frame(root / "data" / "depth.dpth", render_depth(cam, fruits));
  return 0;
}
