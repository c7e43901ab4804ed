#include "tomharvest/config.hpp"

#include <fmt/format.h>
#include <fstream>
#include <set>

namespace tomharvest::config {

using nlohmann::json;

namespace {

void expect_keys(const json& j, const std::string& section, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(fmt::format("config section '{}' must be an object", section));
  for (const auto& [key, _] : j.items()) {
    if (!allowed.contains(key)) throw ConfigError(fmt::format("unknown config key '{}.{}'", section, key));
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("config key '{}.{}' has the wrong type: {}", section, key, e.what()));
  }
}

Eigen::Vector3d vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() || !j[2].is_number()) {
    throw ConfigError(fmt::format("'{}' must be an array of 3 numbers", where));
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Eigen::VectorXd vecn(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(fmt::format("'{}' must be an array of numbers", where));
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(fmt::format("'{}' must be an array of numbers", where));
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

Eigen::Quaterniond quat_wxyz(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 4) throw ConfigError(fmt::format("'{}' must be [w, x, y, z]", where));
  for (const auto& c : j) {
    if (!c.is_number()) throw ConfigError(fmt::format("'{}' must be [w, x, y, z]", where));
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

json to_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

json to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json to_json(const Eigen::Quaterniond& q) { return json::array({q.w(), q.x(), q.y(), q.z()}); }

Eigen::Isometry3d transform(const json& j, const std::string& where) {
  expect_keys(j, where, {"translation", "quaternion_wxyz"});
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  if (j.contains("translation")) t.translation() = vec3(j.at("translation"), where + ".translation");
  if (j.contains("quaternion_wxyz")) {
    const Eigen::Quaterniond q = quat_wxyz(j.at("quaternion_wxyz"), where + ".quaternion_wxyz");
    if (std::abs(q.norm() - 1.0) > 1e-9) throw ConfigError(fmt::format("'{}' quaternion must have unit norm", where));
    t.linear() = q.toRotationMatrix();
  }
  return t;
}

json to_json(const Eigen::Isometry3d& t) {
  return {{"translation", to_json(Eigen::Vector3d(t.translation()))},
          {"quaternion_wxyz", to_json(Eigen::Quaterniond(t.linear()))}};
}

void parse_mechanism(const json& j, RunConfig& cfg) {
  const std::string s = "mechanism";
  expect_keys(j, s, {"r", "f", "a", "b", "c", "d", "e", "l_s", "l_p", "l_DM", "theta_min_deg", "theta_max_deg",
                     "finger_count", "branch"});
  auto& m = cfg.mechanism;
  read(j, "r", m.r, s);
  read(j, "f", m.f, s);
  read(j, "a", m.a, s);
  read(j, "b", m.b, s);
  read(j, "c", m.c, s);
  read(j, "d", m.d, s);
  read(j, "e", m.e, s);
  read(j, "l_s", m.l_s, s);
  read(j, "l_p", m.l_p, s);
  read(j, "l_DM", m.l_dm, s);
  read(j, "theta_min_deg", m.theta_min_deg, s);
  read(j, "theta_max_deg", m.theta_max_deg, s);
  read(j, "finger_count", m.finger_count, s);
  if (j.contains("branch")) {
    std::string b;
    read(j, "branch", b, s);
    cfg.branch = mechanism::branch_from_string(b);
  }
}

void parse_arm(const json& j, RunConfig& cfg) {
  expect_keys(j, "arm", {"joints", "base", "tool"});
  std::vector<arm::Joint> joints = cfg.chain.joints();
  Eigen::Isometry3d base = cfg.chain.base();
  Eigen::Isometry3d tool = cfg.chain.tool();
  if (j.contains("joints")) {
    const json& js = j.at("joints");
    if (!js.is_array()) throw ConfigError("'arm.joints' must be an array");
    joints.clear();
    for (std::size_t i = 0; i < js.size(); ++i) {
      const std::string where = fmt::format("arm.joints[{}]", i);
      expect_keys(js[i], where, {"name", "axis", "origin", "limits"});
      arm::Joint joint;
      read(js[i], "name", joint.name, where);
      if (js[i].contains("axis")) joint.axis = vec3(js[i].at("axis"), where + ".axis");
      if (js[i].contains("origin")) joint.origin = vec3(js[i].at("origin"), where + ".origin");
      if (js[i].contains("limits")) {
        const Eigen::VectorXd lim = vecn(js[i].at("limits"), where + ".limits");
        if (lim.size() != 2) throw ConfigError(fmt::format("'{}.limits' must be [min, max]", where));
        joint.lower = lim[0];
        joint.upper = lim[1];
      }
      joints.push_back(joint);
    }
  }
  if (j.contains("base")) base = transform(j.at("base"), "arm.base");
  if (j.contains("tool")) tool = transform(j.at("tool"), "arm.tool");
  cfg.chain = arm::KinematicChain(std::move(joints), base, tool);
}

void parse_ik(const json& j, RunConfig& cfg) {
  const std::string s = "ik";
  expect_keys(j, s, {"max_iters", "tol_pos", "tol_rot", "damping", "mode", "approach_axis"});
  read(j, "max_iters", cfg.ik.max_iters, s);
  read(j, "tol_pos", cfg.ik.tol_pos, s);
  read(j, "tol_rot", cfg.ik.tol_rot, s);
  read(j, "damping", cfg.ik.damping, s);
  if (j.contains("mode")) {
    std::string mode;
    read(j, "mode", mode, s);
    if (mode == "position_only") {
      cfg.ik.mode = arm::OrientationMode::kPositionOnly;
    } else if (mode == "approach_axis") {
      cfg.ik.mode = arm::OrientationMode::kApproachAxis;
    } else if (mode == "full") {
      cfg.ik.mode = arm::OrientationMode::kFull;
    } else {
      throw ConfigError(fmt::format("unknown ik.mode '{}'", mode));
    }
  }
  if (j.contains("approach_axis")) cfg.ik.approach_axis = vec3(j.at("approach_axis"), "ik.approach_axis").normalized();
}

std::string ik_mode_name(arm::OrientationMode m) {
  switch (m) {
    case arm::OrientationMode::kPositionOnly: return "position_only";
    case arm::OrientationMode::kApproachAxis: return "approach_axis";
    case arm::OrientationMode::kFull: return "full";
  }
  return "approach_axis";
}

void parse_camera(const json& j, RunConfig& cfg) {
  const std::string s = "camera";
  expect_keys(j, s, {"fx", "fy", "cx", "cy", "width", "height", "extrinsics", "depth_scale"});
  auto& c = cfg.camera;
  read(j, "fx", c.fx, s);
  read(j, "fy", c.fy, s);
  read(j, "cx", c.cx, s);
  read(j, "cy", c.cy, s);
  read(j, "width", c.width, s);
  read(j, "height", c.height, s);
  read(j, "depth_scale", c.depth_scale, s);
  if (j.contains("extrinsics")) {
    const json& e = j.at("extrinsics");
    expect_keys(e, "camera.extrinsics", {"translation", "quaternion_wxyz"});
    if (e.contains("translation")) c.translation = vec3(e.at("translation"), "camera.extrinsics.translation");
    if (e.contains("quaternion_wxyz")) c.rotation = quat_wxyz(e.at("quaternion_wxyz"), "camera.extrinsics.quaternion_wxyz");
  }
}

void parse_perception(const json& j, RunConfig& cfg) {
  const std::string s = "perception";
  expect_keys(j, s, {"confidence_threshold", "depth_window", "policy"});
  read(j, "confidence_threshold", cfg.target_options.confidence_threshold, s);
  read(j, "depth_window", cfg.target_options.depth_window, s);
  if (j.contains("policy")) {
    std::string p;
    read(j, "policy", p, s);
    cfg.policy = perception::policy_from_string(p);
  }
}

void parse_scene(const json& j, RunConfig& cfg) {
  expect_keys(j, "scene", {"spheres", "capsules", "bounds"});
  planner::Scene scene;
  if (j.contains("spheres")) {
    const json& ss = j.at("spheres");
    if (!ss.is_array()) throw ConfigError("'scene.spheres' must be an array");
    for (std::size_t i = 0; i < ss.size(); ++i) {
      const std::string where = fmt::format("scene.spheres[{}]", i);
      expect_keys(ss[i], where, {"center", "radius", "tag"});
      planner::Sphere sp;
      if (!ss[i].contains("center") || !ss[i].contains("radius")) {
        throw ConfigError(fmt::format("'{}' needs center and radius", where));
      }
      sp.center = vec3(ss[i].at("center"), where + ".center");
      read(ss[i], "radius", sp.radius, where);
      if (ss[i].contains("tag")) sp.tag = planner::sphere_tag_from_string(ss[i].at("tag").get<std::string>());
      scene.spheres.push_back(sp);
    }
  }
  if (j.contains("capsules")) {
    const json& cs = j.at("capsules");
    if (!cs.is_array()) throw ConfigError("'scene.capsules' must be an array");
    for (std::size_t i = 0; i < cs.size(); ++i) {
      const std::string where = fmt::format("scene.capsules[{}]", i);
      expect_keys(cs[i], where, {"p0", "p1", "radius", "tag"});
      if (!cs[i].contains("p0") || !cs[i].contains("p1") || !cs[i].contains("radius")) {
        throw ConfigError(fmt::format("'{}' needs p0, p1 and radius", where));
      }
      planner::Capsule c;
      c.p0 = vec3(cs[i].at("p0"), where + ".p0");
      c.p1 = vec3(cs[i].at("p1"), where + ".p1");
      read(cs[i], "radius", c.radius, where);
      if (cs[i].contains("tag")) c.tag = planner::capsule_tag_from_string(cs[i].at("tag").get<std::string>());
      scene.capsules.push_back(c);
    }
  }
  if (j.contains("bounds")) {
    const json& b = j.at("bounds");
    expect_keys(b, "scene.bounds", {"min", "max"});
    if (b.contains("min")) scene.workspace_bounds.min = vec3(b.at("min"), "scene.bounds.min");
    if (b.contains("max")) scene.workspace_bounds.max = vec3(b.at("max"), "scene.bounds.max");
  }
  cfg.scene = std::move(scene);
}

void parse_pso(const json& j, RunConfig& cfg) {
  const std::string s = "pso";
  expect_keys(j, s, {"swarm_size", "iterations", "inertia", "cognitive", "social", "waypoints", "seed",
                     "collision_penalty", "limit_penalty", "clearance", "samples_per_segment", "init_inflation",
                     "init_min_margin"});
  auto& p = cfg.pso;
  read(j, "swarm_size", p.swarm_size, s);
  read(j, "iterations", p.iterations, s);
  read(j, "inertia", p.inertia, s);
  read(j, "cognitive", p.cognitive, s);
  read(j, "social", p.social, s);
  read(j, "waypoints", p.waypoints_per_particle, s);
  read(j, "seed", p.seed, s);
  read(j, "collision_penalty", p.collision_penalty, s);
  read(j, "limit_penalty", p.limit_penalty, s);
  read(j, "clearance", p.clearance, s);
  read(j, "samples_per_segment", p.samples_per_segment, s);
  read(j, "init_inflation", p.init_inflation, s);
  read(j, "init_min_margin", p.init_min_margin, s);
}

void parse_pick_cycle(const json& j, RunConfig& cfg) {
  const std::string s = "pick_cycle";
  expect_keys(j, s, {"stage_time_means", "stage_time_stddev_frac", "pose_noise_sigma", "cut_zone_radius",
                     "cut_trigger_distance", "insertion_depth", "standoff", "grasp_force", "grasp_theta_deg", "home",
                     "punnet", "seed"});
  auto& p = cfg.pick_cycle;
  if (j.contains("stage_time_means")) {
    const json& m = j.at("stage_time_means");
    if (!m.is_object()) throw ConfigError("'pick_cycle.stage_time_means' must be an object");
    for (const auto& [key, value] : m.items()) {
      if (!value.is_number()) throw ConfigError(fmt::format("stage mean '{}' must be a number", key));
      p.stage_time_means[harvest::stage_from_string(key)] = value.get<double>();
    }
  }
  read(j, "stage_time_stddev_frac", p.stage_time_stddev_frac, s);
  read(j, "pose_noise_sigma", p.pose_noise_sigma, s);
  read(j, "cut_zone_radius", p.cut_zone_radius, s);
  read(j, "cut_trigger_distance", p.cut_trigger_distance, s);
  read(j, "insertion_depth", p.insertion_depth, s);
  read(j, "standoff", p.standoff, s);
  read(j, "grasp_force", p.grasp_force, s);
  read(j, "grasp_theta_deg", p.grasp_theta_deg, s);
  read(j, "seed", p.seed, s);
  if (j.contains("home")) p.home = vecn(j.at("home"), "pick_cycle.home");
  if (j.contains("punnet")) p.punnet = vecn(j.at("punnet"), "pick_cycle.punnet");
}

void parse_plan(const json& j, RunConfig& cfg) {
  expect_keys(j, "plan", {"start", "goal"});
  if (j.contains("start")) cfg.plan_start = vecn(j.at("start"), "plan.start");
  if (j.contains("goal")) cfg.plan_goal = vecn(j.at("goal"), "plan.goal");
}

void parse_io(const json& j, RunConfig& cfg, const std::filesystem::path& base_dir) {
  expect_keys(j, "io", {"detections", "depth"});
  auto resolve = [&](const json& v, const char* key) {
    if (!v.is_string()) throw ConfigError(fmt::format("'io.{}' must be a path string", key));
    std::filesystem::path p = v.get<std::string>();
    return p.is_relative() ? base_dir / p : p;
  };
  if (j.contains("detections")) cfg.detections_path = resolve(j.at("detections"), "detections");
  if (j.contains("depth")) cfg.depth_path = resolve(j.at("depth"), "depth");
}

}  // namespace

void RunConfig::validate() const {
  mechanism.validate();
  if (!mechanism::assembles_over_range(mechanism, branch)) {
    throw ConfigError("finger linkage does not assemble over the whole mechanism theta range");
  }
  if (ik.max_iters < 1 || !(ik.tol_pos > 0.0) || !(ik.tol_rot > 0.0) || !(ik.damping >= 0.0)) {
    throw ConfigError("ik options need max_iters >= 1, positive tolerances and damping >= 0");
  }
  camera.validate();
  if (!(target_options.confidence_threshold >= 0.0 && target_options.confidence_threshold <= 1.0)) {
    throw ConfigError("perception.confidence_threshold must lie in [0, 1]");
  }
  if (target_options.depth_window < 0) throw ConfigError("perception.depth_window must be >= 0");
  scene.validate();
  pso.validate();
  pick_cycle.validate(chain);
  for (const auto* q : {&plan_start, &plan_goal}) {
    if (*q && (*q)->size() != chain.dof()) throw ConfigError("plan start/goal must have one entry per joint");
  }
}

void RunConfig::set_seed(std::uint64_t seed) {
  pso.seed = seed;
  pick_cycle.seed = seed;
}

RunConfig parse_run_config(const json& doc, const std::filesystem::path& base_dir) {
  expect_keys(doc, "<root>",
              {"mechanism", "arm", "ik", "camera", "perception", "scene", "pso", "pick_cycle", "plan", "io"});
  RunConfig cfg;
  if (doc.contains("mechanism")) parse_mechanism(doc.at("mechanism"), cfg);
  if (doc.contains("arm")) parse_arm(doc.at("arm"), cfg);
  if (doc.contains("ik")) parse_ik(doc.at("ik"), cfg);
  if (doc.contains("camera")) parse_camera(doc.at("camera"), cfg);
  if (doc.contains("perception")) parse_perception(doc.at("perception"), cfg);
  if (doc.contains("scene")) parse_scene(doc.at("scene"), cfg);
  if (doc.contains("pso")) parse_pso(doc.at("pso"), cfg);
  if (doc.contains("pick_cycle")) parse_pick_cycle(doc.at("pick_cycle"), cfg);
  if (doc.contains("plan")) parse_plan(doc.at("plan"), cfg);
  if (doc.contains("io")) parse_io(doc.at("io"), cfg, base_dir);

  // The pick cycle drives the same gripper and IK settings.
  cfg.pick_cycle.gripper = cfg.mechanism;
  cfg.pick_cycle.gripper_branch = cfg.branch;
  cfg.pick_cycle.ik = cfg.ik;
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config file {}", path.string()));
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("config file {} is not valid JSON (byte {}): {}", path.string(), e.byte, e.what()));
  }
  return parse_run_config(doc, path.parent_path());
}

json to_json(const RunConfig& cfg) {
  json doc;
  const auto& m = cfg.mechanism;
  doc["mechanism"] = {{"r", m.r},       {"f", m.f},         {"a", m.a},
                      {"b", m.b},       {"c", m.c},         {"d", m.d},
                      {"e", m.e},       {"l_s", m.l_s},     {"l_p", m.l_p},
                      {"l_DM", m.l_dm}, {"theta_min_deg", m.theta_min_deg}, {"theta_max_deg", m.theta_max_deg},
                      {"finger_count", m.finger_count}, {"branch", mechanism::to_string(cfg.branch)}};

  json joints = json::array();
  for (const auto& j : cfg.chain.joints()) {
    joints.push_back({{"name", j.name},
                      {"axis", to_json(j.axis)},
                      {"origin", to_json(j.origin)},
                      {"limits", json::array({j.lower, j.upper})}});
  }
  doc["arm"] = {{"joints", joints}, {"base", to_json(cfg.chain.base())}, {"tool", to_json(cfg.chain.tool())}};
  doc["ik"] = {{"max_iters", cfg.ik.max_iters},           {"tol_pos", cfg.ik.tol_pos},
               {"tol_rot", cfg.ik.tol_rot},               {"damping", cfg.ik.damping},
               {"mode", ik_mode_name(cfg.ik.mode)},       {"approach_axis", to_json(cfg.ik.approach_axis)}};

  const auto& c = cfg.camera;
  doc["camera"] = {{"fx", c.fx},
                   {"fy", c.fy},
                   {"cx", c.cx},
                   {"cy", c.cy},
                   {"width", c.width},
                   {"height", c.height},
                   {"depth_scale", c.depth_scale},
                   {"extrinsics", {{"translation", to_json(c.translation)}, {"quaternion_wxyz", to_json(c.rotation)}}}};
  doc["perception"] = {{"confidence_threshold", cfg.target_options.confidence_threshold},
                       {"depth_window", cfg.target_options.depth_window},
                       {"policy", cfg.policy == perception::SelectionPolicy::kRipestNearest ? "ripest_nearest"
                                                                                             : "highest_score"}};

  json spheres = json::array();
  for (const auto& s : cfg.scene.spheres) {
    spheres.push_back({{"center", to_json(s.center)}, {"radius", s.radius}, {"tag", planner::to_string(s.tag)}});
  }
  json capsules = json::array();
  for (const auto& cap : cfg.scene.capsules) {
    capsules.push_back({{"p0", to_json(cap.p0)},
                        {"p1", to_json(cap.p1)},
                        {"radius", cap.radius},
                        {"tag", planner::to_string(cap.tag)}});
  }
  doc["scene"] = {{"spheres", spheres},
                  {"capsules", capsules},
                  {"bounds", {{"min", to_json(cfg.scene.workspace_bounds.min)},
                              {"max", to_json(cfg.scene.workspace_bounds.max)}}}};

  const auto& p = cfg.pso;
  doc["pso"] = {{"swarm_size", p.swarm_size},
                {"iterations", p.iterations},
                {"inertia", p.inertia},
                {"cognitive", p.cognitive},
                {"social", p.social},
                {"waypoints", p.waypoints_per_particle},
                {"seed", p.seed},
                {"collision_penalty", p.collision_penalty},
                {"limit_penalty", p.limit_penalty},
                {"clearance", p.clearance},
                {"samples_per_segment", p.samples_per_segment},
                {"init_inflation", p.init_inflation},
                {"init_min_margin", p.init_min_margin}};

  const auto& pc = cfg.pick_cycle;
  json means = json::object();
  for (const auto& [stage, t] : pc.stage_time_means) means[harvest::to_string(stage)] = t;
  doc["pick_cycle"] = {{"stage_time_means", means},
                       {"stage_time_stddev_frac", pc.stage_time_stddev_frac},
                       {"pose_noise_sigma", pc.pose_noise_sigma},
                       {"cut_zone_radius", pc.cut_zone_radius},
                       {"cut_trigger_distance", pc.cut_trigger_distance},
                       {"insertion_depth", pc.insertion_depth},
                       {"standoff", pc.standoff},
                       {"grasp_force", pc.grasp_force},
                       {"grasp_theta_deg", pc.grasp_theta_deg},
                       {"home", to_json(pc.home)},
                       {"punnet", to_json(pc.punnet)},
                       {"seed", pc.seed}};
  if (cfg.plan_start || cfg.plan_goal) {
    doc["plan"] = json::object();
    if (cfg.plan_start) doc["plan"]["start"] = to_json(*cfg.plan_start);
    if (cfg.plan_goal) doc["plan"]["goal"] = to_json(*cfg.plan_goal);
  }
  return doc;
}

}  // namespace tomharvest::config
