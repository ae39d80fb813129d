#pragma once

// JSON run configuration for the command-line tool. See docs/config.md.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "arthromap/camera.hpp"
#include "arthromap/losses.hpp"
#include "arthromap/optimizer.hpp"
#include "arthromap/oracle.hpp"
#include "arthromap/tsdf.hpp"

namespace arthromap::cli {

using Json = nlohmann::json;

[[noreturn]] inline void bad_config(const std::string& what) { throw Error(ErrorCode::kMalformedConfig, what); }

// Typed lookup of an optional key; a present key of the wrong type is an
// error.
template <class T>
T value_or(const Json& j, const char* key, T fallback) {
  if (!j.is_object()) bad_config(std::string("expected an object around '") + key + "'");
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    bad_config(std::string("config key '") + key + "' has the wrong type");
  }
}

inline const Json& section(const Json& j, const char* key) {
  static const Json empty = Json::object();
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return empty;
  if (!it->is_object()) bad_config(std::string("config section '") + key + "' must be an object");
  return *it;
}

inline Vec3 vec3_or(const Json& j, const char* key, const Vec3& fallback) {
  const auto v = value_or<std::vector<double>>(j, key, {fallback.x(), fallback.y(), fallback.z()});
  if (v.size() != 3) bad_config(std::string("config key '") + key + "' must have 3 elements");
  return {v[0], v[1], v[2]};
}

inline Label parse_label(const Json& j) {
  if (j.is_number_integer()) {
    const int id = j.get<int>();
    if (id < 0 || id >= kLabelCount) throw Error(ErrorCode::kUnknownLabel, "unknown label id " + std::to_string(id));
    return static_cast<Label>(id);
  }
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "other") return Label::kOther;
    if (s == "cartilage") return Label::kCartilage;
    if (s == "meniscus") return Label::kMeniscus;
    if (s == "acl") return Label::kAcl;
    throw Error(ErrorCode::kUnknownLabel, "unknown label name '" + s + "'");
  }
  bad_config("label must be an id or a name");
}

inline PoseSE3 parse_pose(const Json& j) {
  if (!j.is_object()) bad_config("pose must be an object with 'rot_deg' and 'trl' (mm)");
  const Vec3 deg = vec3_or(j, "rot_deg", Vec3::Zero());
  return PoseSE3(deg * std::numbers::pi / 180.0, vec3_or(j, "trl", Vec3::Zero()));
}

struct CameraConfig {
  double fov_deg = 87.5;
  int width = 256;
  int height = 256;
  double baseline = 1.52;

  StereoRig rig() const {
    StereoRig r{intrinsics_from_fov(fov_deg, width, height), baseline};
    r.validate();
    return r;
  }
};

inline CameraConfig parse_camera(const Json& j) {
  CameraConfig c;
  c.fov_deg = value_or(j, "fov_deg", c.fov_deg);
  c.width = value_or(j, "width", c.width);
  c.height = value_or(j, "height", c.height);
  c.baseline = value_or(j, "baseline", c.baseline);
  return c;
}

inline oracle::Scene parse_scene(const Json& j) {
  oracle::Scene scene;
  scene.seed = value_or<std::uint64_t>(j, "seed", scene.seed);
  scene.supersample = value_or(j, "supersample", scene.supersample);
  const auto texture = value_or<std::string>(j, "texture", "textured");
  if (texture == "textured") scene.texture = oracle::TextureMode::kTextured;
  else if (texture == "low_texture") scene.texture = oracle::TextureMode::kLowTexture;
  else bad_config("scene.texture must be 'textured' or 'low_texture'");
  const Vec3 bg = vec3_or(j, "background", Vec3::Zero());
  scene.background = {bg.x(), bg.y(), bg.z()};
  const Json& light = section(j, "lighting");
  scene.lighting.ambient = value_or(light, "ambient", scene.lighting.ambient);
  scene.lighting.point_light = value_or(light, "point_light", scene.lighting.point_light);
  scene.lighting.point_intensity = value_or(light, "point_intensity", scene.lighting.point_intensity);
  scene.lighting.reference_distance = value_or(light, "reference_distance", scene.lighting.reference_distance);

  auto it = j.find("primitives");
  if (it == j.end() || !it->is_array() || it->empty()) bad_config("scene.primitives must be a non-empty array");
  for (const auto& p : *it) {
    if (!p.is_object()) bad_config("each primitive must be an object");
    oracle::Primitive prim;
    const auto type = value_or<std::string>(p, "type", "");
    if (type == "plane") {
      prim.shape = oracle::Plane{vec3_or(p, "point", Vec3::Zero()), vec3_or(p, "normal", Vec3::UnitZ()).normalized()};
    } else if (type == "sphere") {
      prim.shape = oracle::Sphere{vec3_or(p, "center", Vec3::Zero()), value_or(p, "radius", 1.0)};
    } else if (type == "capsule") {
      prim.shape = oracle::Capsule{vec3_or(p, "a", Vec3::Zero()), vec3_or(p, "b", Vec3::UnitX()), value_or(p, "radius", 1.0)};
    } else {
      bad_config("primitive type must be plane, sphere or capsule");
    }
    if (p.contains("label")) prim.label = parse_label(p["label"]);
    const Vec3 c = vec3_or(p, "color", Vec3(0.8, 0.7, 0.6));
    prim.color = {c.x(), c.y(), c.z()};
    scene.primitives.push_back(prim);
  }
  return scene;
}

struct TrajectoryConfig {
  std::string kind = "orbit";  ///< orbit | sphere_coverage
  oracle::SweepOptions sweep;
  Vec3 center = Vec3::Zero();  ///< sphere_coverage
  double distance = 120.0;     ///< sphere_coverage, mm
};

inline TrajectoryConfig parse_trajectory(const Json& j) {
  TrajectoryConfig t;
  t.kind = value_or(j, "kind", t.kind);
  if (t.kind != "orbit" && t.kind != "sphere_coverage") bad_config("trajectory.kind must be 'orbit' or 'sphere_coverage'");
  t.sweep.n = value_or(j, "n", t.sweep.n);
  t.sweep.sweep = value_or(j, "sweep", t.sweep.sweep);
  t.sweep.seed = value_or<std::uint64_t>(j, "seed", t.sweep.seed);
  if (j.contains("start")) t.sweep.start = parse_pose(j["start"]);
  t.sweep.direction = vec3_or(j, "direction", t.sweep.direction);
  t.sweep.rotation_amplitude =
      value_or(j, "rotation_amplitude_deg", t.sweep.rotation_amplitude * 180.0 / std::numbers::pi) * std::numbers::pi / 180.0;
  t.sweep.jitter = value_or(j, "jitter", t.sweep.jitter);
  t.sweep.speed_ratio = value_or(j, "speed_ratio", t.sweep.speed_ratio);
  t.center = vec3_or(j, "center", t.center);
  t.distance = value_or(j, "distance", t.distance);
  return t;
}

inline LossConfig parse_loss(const Json& j) {
  LossConfig c;
  c.alpha = value_or(j, "alpha", c.alpha);
  c.lambda_smoo = value_or(j, "lambda_smoo", c.lambda_smoo);
  c.ssim_c1 = value_or(j, "ssim_c1", c.ssim_c1);
  c.ssim_c2 = value_or(j, "ssim_c2", c.ssim_c2);
  c.ssim_window = value_or(j, "ssim_window", c.ssim_window);
  c.trl_weights = vec3_or(j, "trl_weights", c.trl_weights);
  c.norm_epsilon = value_or(j, "norm_epsilon", c.norm_epsilon);
  c.smooth_normalized_disparity = value_or(j, "smooth_normalized_disparity", c.smooth_normalized_disparity);
  c.validate();
  return c;
}

inline OptimizerConfig parse_optimizer(const Json& j) {
  OptimizerConfig c;
  c.max_iters = value_or(j, "max_iters", c.max_iters);
  c.fd_step_rot = value_or(j, "fd_step_rot", c.fd_step_rot);
  c.fd_step_trl = value_or(j, "fd_step_trl", c.fd_step_trl);
  c.armijo_c = value_or(j, "armijo_c", c.armijo_c);
  c.init_step = value_or(j, "init_step", c.init_step);
  c.tol_loss = value_or(j, "tol_loss", c.tol_loss);
  c.quasi_newton = value_or(j, "quasi_newton", c.quasi_newton);
  c.max_backtracks = value_or(j, "max_backtracks", c.max_backtracks);
  c.max_step_rot = value_or(j, "max_step_rot", c.max_step_rot);
  c.max_step_trl = value_or(j, "max_step_trl", c.max_step_trl);
  c.sample_radius_rot = value_or(j, "sample_radius_rot", c.sample_radius_rot);
  c.sample_radius_trl = value_or(j, "sample_radius_trl", c.sample_radius_trl);
  c.sample_count = value_or(j, "sample_count", c.sample_count);
  c.sample_levels = value_or(j, "sample_levels", c.sample_levels);
  c.sample_seed = value_or<std::uint64_t>(j, "sample_seed", c.sample_seed);
  c.validate();
  return c;
}

struct RecoverConfig {
  int target = 1;
  int source = 0;
  bool stereo = false;             ///< also use the target's right image as a fixed source
  double perturb_rot_deg = 2.0;    ///< per axis
  double perturb_trl_frac = 0.03;  ///< of the mean target depth
  std::uint64_t seed = 1;
};

inline RecoverConfig parse_recover(const Json& j) {
  RecoverConfig r;
  r.target = value_or(j, "target", r.target);
  r.source = value_or(j, "source", r.source);
  r.stereo = value_or(j, "stereo", r.stereo);
  r.perturb_rot_deg = value_or(j, "perturb_rot_deg", r.perturb_rot_deg);
  r.perturb_trl_frac = value_or(j, "perturb_trl_frac", r.perturb_trl_frac);
  r.seed = value_or<std::uint64_t>(j, "seed", r.seed);
  return r;
}

struct LossEvalConfig {
  int target = 1;
  std::optional<std::vector<int>> sources;      ///< neighbours of the target when empty
  bool stereo = false;                          ///< add the target's right image as a source
  std::optional<std::string> pred_trajectory;   ///< enables the pose term
};

inline LossEvalConfig parse_loss_eval(const Json& j) {
  LossEvalConfig l;
  l.target = value_or(j, "target", l.target);
  if (j.contains("sources") && !j["sources"].is_null()) l.sources = value_or<std::vector<int>>(j, "sources", {});
  l.stereo = value_or(j, "stereo", l.stereo);
  if (j.contains("pred_trajectory") && !j["pred_trajectory"].is_null()) {
    l.pred_trajectory = value_or<std::string>(j, "pred_trajectory", "");
  }
  return l;
}

struct FusionConfig {
  VolumeParams volume;
  std::optional<std::vector<int>> frames;  ///< all dataset frames when empty
  std::optional<std::string> trajectory;   ///< dataset trajectory when empty
  bool use_labels = true;
  bool tv_l1 = false;
  double tv_lambda = 1.0;
  int tv_iters = 100;
  std::string ply_format = "binary";
};

inline FusionConfig parse_fusion(const Json& j) {
  FusionConfig f;
  f.volume.voxel_size = value_or(j, "voxel_size", f.volume.voxel_size);
  f.volume.truncation = value_or(j, "truncation", f.volume.truncation);
  f.volume.max_weight = value_or(j, "max_weight", f.volume.max_weight);
  if (j.contains("dims") && !j["dims"].is_null()) {
    const auto d = value_or<std::vector<int>>(j, "dims", {});
    if (d.size() != 3) bad_config("fusion.dims must have 3 elements");
    f.volume.dims = Index3{d[0], d[1], d[2]};
    f.volume.origin = vec3_or(j, "origin", Vec3::Zero());
  }
  if (j.contains("frames") && !j["frames"].is_null()) f.frames = value_or<std::vector<int>>(j, "frames", {});
  if (j.contains("trajectory") && !j["trajectory"].is_null()) f.trajectory = value_or<std::string>(j, "trajectory", "");
  f.use_labels = value_or(j, "use_labels", f.use_labels);
  const Json& tv = section(j, "tv_l1");
  f.tv_l1 = value_or(tv, "enabled", f.tv_l1);
  f.tv_lambda = value_or(tv, "lambda", f.tv_lambda);
  f.tv_iters = value_or(tv, "iters", f.tv_iters);
  f.ply_format = value_or(j, "ply_format", f.ply_format);
  if (f.ply_format != "binary" && f.ply_format != "ascii") bad_config("fusion.ply_format must be 'binary' or 'ascii'");
  f.volume.validate();
  return f;
}

struct Config {
  std::string dataset = "dataset";
  std::string output = "out";
  std::string depth_format = "png";  ///< png | raw
  CameraConfig camera;
  std::optional<oracle::Scene> scene;
  TrajectoryConfig trajectory;
  LossConfig loss;
  OptimizerConfig optimizer;
  LossEvalConfig loss_eval;
  RecoverConfig recover;
  FusionConfig fusion;
};

/// Parses the merged configuration document (file plus overrides).
inline Config parse_config(const Json& j) {
  if (!j.is_object()) bad_config("config root must be an object");
  Config c;
  c.dataset = value_or(j, "dataset", c.dataset);
  c.output = value_or(j, "output", c.output);
  c.depth_format = value_or(j, "depth_format", c.depth_format);
  if (c.depth_format != "png" && c.depth_format != "raw") bad_config("depth_format must be 'png' or 'raw'");
  c.camera = parse_camera(section(j, "camera"));
  if (j.contains("scene")) c.scene = parse_scene(section(j, "scene"));
  c.trajectory = parse_trajectory(section(j, "trajectory"));
  c.loss = parse_loss(section(j, "loss"));
  c.optimizer = parse_optimizer(section(j, "optimizer"));
  c.loss_eval = parse_loss_eval(section(j, "loss_eval"));
  c.recover = parse_recover(section(j, "recover"));
  c.fusion = parse_fusion(section(j, "fusion"));
  return c;
}

inline Json load_json(const std::filesystem::path& path) {
  const std::string text = detail::read_all(path);
  Json j = Json::parse(text, nullptr, false, true);
  if (j.is_discarded()) throw Error(ErrorCode::kMalformedConfig, "config is not valid JSON: " + path.string());
  return j;
}

/// Applies a `dotted.key=value` override. The value is parsed as JSON when
/// possible and taken as a string otherwise.
inline void apply_override(Json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) bad_config("override must look like key.path=value: " + assignment);
  std::string pointer;
  std::size_t start = 0;
  const std::string key = assignment.substr(0, eq);
  while (start <= key.size()) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) bad_config("empty key component in override: " + assignment);
    pointer += "/" + part;
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  const std::string text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  try {
    root[Json::json_pointer(pointer)] = value;
  } catch (const nlohmann::json::exception& e) {
    bad_config("cannot apply override " + assignment + ": " + e.what());
  }
}

}  // namespace arthromap::cli
