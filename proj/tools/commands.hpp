#pragma once

// Subcommand implementations. Each returns the JSON report that main()
// prints on stdout; reports carry no timing so reruns are byte-identical.

#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "arthromap/losses.hpp"
#include "arthromap/mesh.hpp"
#include "arthromap/optimizer.hpp"
#include "arthromap/oracle.hpp"
#include "arthromap/pose.hpp"
#include "arthromap/trajectory_io.hpp"
#include "arthromap/tsdf.hpp"
#include "arthromap/warp.hpp"
#include "config.hpp"
#include "dataset.hpp"

namespace arthromap::cli {

inline constexpr double kDeg = 180.0 / std::numbers::pi;

inline Json pose_json(const PoseSE3& p) {
  return {{"rot_deg", {p.rot.x() * kDeg, p.rot.y() * kDeg, p.rot.z() * kDeg}},
          {"trl", {p.trl.x(), p.trl.y(), p.trl.z()}}};
}

inline void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create directory " + dir.string() + ": " + ec.message());
}

inline void write_json(const fs::path& path, const Json& j) { detail::write_all(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------

inline Json run_synth(const Config& cfg) {
  if (!cfg.scene) bad_config("synth needs a 'scene' section");
  const oracle::Scene& scene = *cfg.scene;
  const StereoRig rig = cfg.camera.rig();
  oracle::SweepStats stats;
  Trajectory traj;
  if (cfg.trajectory.kind == "orbit") {
    traj = oracle::orbit_trajectory(scene, cfg.trajectory.sweep, &stats);
  } else {
    traj = oracle::sphere_coverage_trajectory(cfg.trajectory.center, cfg.trajectory.distance, cfg.trajectory.sweep.n);
    for (std::size_t i = 1; i < traj.size(); ++i) {
      const PoseSE3 rel = relative(traj[i - 1].pose, traj[i].pose);
      stats.translation_steps.push_back(rel.trl.norm());
      stats.rotation_steps.push_back(rotation_angle_between(Mat3::Identity(), rel.rotation()));
    }
  }

  const fs::path dir = cfg.dataset;
  ensure_directory(dir);
  DatasetInfo info{static_cast<int>(traj.size()), rig, cfg.depth_format};
  std::size_t hit_pixels = 0;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const int idx = static_cast<int>(i);
    const oracle::StereoFrame f = oracle::render(scene, traj[i].pose, rig);
    write_image_png(frame_path(dir, "left", idx), f.left);
    write_image_png(frame_path(dir, "right", idx), f.right);
    if (cfg.depth_format == "raw") write_depth_raw(depth_path(dir, info, idx), f.depth);
    else write_depth_png(depth_path(dir, info, idx), f.depth);
    write_labels_png(frame_path(dir, "labels", idx), f.labels);
    for (double d : f.depth.data()) hit_pixels += is_valid_depth(d) ? 1 : 0;
  }
  write_trajectory(dir / "trajectory.txt", traj);
  write_json(dir / "dataset.json", dataset_json(info));

  Json rot_deg = Json::array();
  for (double r : stats.rotation_steps) rot_deg.push_back(r * kDeg);
  return {{"command", "synth"},
          {"dataset", dir.generic_string()},
          {"frames", traj.size()},
          {"hit_pixels", hit_pixels},
          {"translation_steps_mm", stats.translation_steps},
          {"rotation_steps_deg", rot_deg}};
}

// ---------------------------------------------------------------------------

inline Json run_loss(const Config& cfg) {
  const fs::path dir = cfg.dataset;
  const DatasetInfo info = read_dataset_info(dir);
  const Trajectory traj = load_trajectory(dir / "trajectory.txt");
  if (static_cast<int>(traj.size()) != info.frames) {
    throw Error(ErrorCode::kLengthMismatch, "trajectory length differs from the dataset frame count");
  }
  const int t = cfg.loss_eval.target;
  require_frame(info, t);
  std::vector<int> sources;
  if (cfg.loss_eval.sources) {
    sources = *cfg.loss_eval.sources;
  } else {
    if (t > 0) sources.push_back(t - 1);
    if (t + 1 < info.frames) sources.push_back(t + 1);
  }
  for (int s : sources) require_frame(info, s);
  if (sources.empty() && !cfg.loss_eval.stereo) throw Error(ErrorCode::kEmptyInput, "loss: no source frames");

  const ImageBuffer target = load_left(dir, info, t);
  const DepthMap depth = load_depth(dir, info, t);
  std::vector<ImageBuffer> images;
  std::vector<PoseSE3> poses;
  for (int s : sources) {
    images.push_back(load_left(dir, info, s));
    poses.push_back(relative(traj[s].pose, traj[t].pose));
  }
  if (cfg.loss_eval.stereo) {
    images.push_back(load_right(dir, info, t));
    poses.push_back(stereo_pose(info.rig));
  }

  std::optional<PoseSupervision> supervision;
  if (cfg.loss_eval.pred_trajectory) {
    if (sources.empty()) throw Error(ErrorCode::kEmptyInput, "loss: the pose term needs a temporal source");
    const Trajectory pred = load_trajectory(*cfg.loss_eval.pred_trajectory);
    const int s = sources.front();
    if (static_cast<int>(pred.size()) <= std::max(s, t)) {
      throw Error(ErrorCode::kLengthMismatch, "predicted trajectory is shorter than the referenced frames");
    }
    supervision = PoseSupervision{relative(traj[s].pose, traj[t].pose), relative(pred[s].pose, pred[t].pose)};
  }
  const TotalLossResult r = total_loss(target, images, depth, poses, info.rig.intrinsics, cfg.loss, supervision);

  Json out{{"command", "loss"},
           {"target", t},
           {"sources", sources},
           {"stereo", cfg.loss_eval.stereo},
           {"self_supervised", r.self.loss},
           {"photometric_term", r.self.photometric_term},
           {"smoothness_term", r.self.smoothness_term},
           {"surviving_pixels", r.self.surviving_pixels},
           {"total", r.total}};
  if (r.pose) {
    out["pose"] = {{"trl_normalized", r.pose->trl_normalized},
                   {"trl", r.pose->trl},
                   {"ang_normalized", r.pose->ang_normalized},
                   {"ang", r.pose->ang},
                   {"total", r.pose->total}};
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace detail {

// Uniform double in [-1, 1) from a counter-based hash, identical on every
// platform.
inline double hashed_unit(std::uint64_t seed, std::uint64_t counter) {
  const std::uint64_t h = oracle::detail::splitmix64(seed ^ oracle::detail::splitmix64(counter));
  return 2.0 * static_cast<double>(h >> 11) * 0x1.0p-53 - 1.0;
}

}  // namespace detail

/// Initial pose for recovery: `truth` with every angle moved by exactly
/// `rot_deg` (random sign) and the translation moved by `trl_mm` in a
/// random direction.
inline PoseSE3 perturb_pose(const PoseSE3& truth, double rot_deg, double trl_mm, std::uint64_t seed) {
  Vec3 dr, dt;
  for (int a = 0; a < 3; ++a) dr[a] = detail::hashed_unit(seed, a) < 0.0 ? -1.0 : 1.0;
  for (int a = 0; a < 3; ++a) dt[a] = detail::hashed_unit(seed, 3 + a);
  if (dt.norm() < 1e-9) dt = Vec3::UnitX();
  return PoseSE3(truth.rot + dr * (rot_deg / kDeg), truth.trl + dt.normalized() * trl_mm);
}

inline Json run_recover(const Config& cfg) {
  const fs::path dir = cfg.dataset;
  const DatasetInfo info = read_dataset_info(dir);
  const Trajectory traj = load_trajectory(dir / "trajectory.txt");
  if (static_cast<int>(traj.size()) != info.frames) {
    throw Error(ErrorCode::kLengthMismatch, "trajectory length differs from the dataset frame count");
  }
  const RecoverConfig& rc = cfg.recover;
  require_frame(info, rc.target);
  require_frame(info, rc.source);

  const ImageBuffer target = load_left(dir, info, rc.target);
  const DepthMap depth = load_depth(dir, info, rc.target);
  std::vector<ImageBuffer> sources{load_left(dir, info, rc.source)};
  std::vector<PoseSE3> fixed;
  if (rc.stereo) {
    sources.push_back(load_right(dir, info, rc.target));
    fixed.push_back(stereo_pose(info.rig));
  }
  double sum = 0.0;
  std::size_t valid = 0;
  for (double d : depth.data()) {
    if (is_valid_depth(d)) {
      sum += d;
      ++valid;
    }
  }
  const double mean_depth = valid ? sum / valid : 0.0;

  const PoseSE3 truth = relative(traj[rc.source].pose, traj[rc.target].pose);
  const PoseSE3 init = perturb_pose(truth, rc.perturb_rot_deg, rc.perturb_trl_frac * mean_depth, rc.seed);
  const SelfSupervisedObjective objective(target, sources, depth, info.rig.intrinsics, cfg.loss);
  const PoseRecovery r = recover_pose(objective, init, cfg.optimizer, fixed);

  const double trl_err = (r.pose.trl - truth.trl).norm();
  const double rot_err = rotation_angle_between(r.pose.rotation(), truth.rotation()) * kDeg;

  const fs::path out_dir = cfg.output;
  ensure_directory(out_dir);
  Trajectory est;
  const PoseSE3& t_pose = traj[rc.target].pose;
  const PoseSE3 s_pose = compose(t_pose, invert(r.pose));
  if (traj[rc.source].timestamp < traj[rc.target].timestamp) {
    est.push_back(traj[rc.source].timestamp, s_pose);
    est.push_back(traj[rc.target].timestamp, t_pose);
  } else {
    est.push_back(traj[rc.target].timestamp, t_pose);
    if (rc.source != rc.target) est.push_back(traj[rc.source].timestamp, s_pose);
  }
  write_trajectory(out_dir / "recovered_trajectory.txt", est);

  Json report{{"command", "recover-pose"},
              {"target", rc.target},
              {"source", rc.source},
              {"stereo", rc.stereo},
              {"mean_depth_mm", mean_depth},
              {"truth", pose_json(truth)},
              {"init", pose_json(init)},
              {"recovered", pose_json(r.pose)},
              {"status", std::string(to_string(r.status))},
              {"iterations", r.iterations},
              {"loss_evaluations", r.loss_evaluations},
              {"translation_error_mm", trl_err},
              {"translation_error_fraction", mean_depth > 0.0 ? trl_err / mean_depth : 0.0},
              {"rotation_error_deg", rot_err},
              {"trace", r.trace},
              {"gradient_norms", r.gradient_norms}};
  write_json(out_dir / "recover.json", report);
  return report;
}

// ---------------------------------------------------------------------------

inline Json run_fuse(const Config& cfg) {
  const fs::path dir = cfg.dataset;
  const DatasetInfo info = read_dataset_info(dir);
  const FusionConfig& fc = cfg.fusion;
  const fs::path traj_path = fc.trajectory ? fs::path(*fc.trajectory) : dir / "trajectory.txt";
  const Trajectory traj = load_trajectory(traj_path);

  std::vector<int> frames;
  if (fc.frames) {
    frames = *fc.frames;
    if (frames.empty()) throw Error(ErrorCode::kEmptyInput, "fuse: empty frame list");
  } else {
    for (int i = 0; i < info.frames; ++i) frames.push_back(i);
  }
  for (int f : frames) {
    require_frame(info, f);
    if (f >= static_cast<int>(traj.size())) {
      throw Error(ErrorCode::kLengthMismatch, "fuse: trajectory has " + std::to_string(traj.size()) +
                                                  " poses but frame " + std::to_string(f) + " was requested");
    }
  }

  std::vector<FusionFrame> chunk;
  chunk.reserve(frames.size());
  for (int f : frames) {
    chunk.push_back({load_depth(dir, info, f), fc.use_labels ? load_labels(dir, info, f) : std::nullopt, traj[f].pose});
  }
  TsdfVolume vol = fuse_chunk(chunk, fc.volume, info.rig.intrinsics);
  Json tv = nullptr;
  if (fc.tv_l1) {
    TvL1Result r = regularize_tv_l1(vol, fc.tv_lambda, fc.tv_iters);
    tv = {{"lambda", fc.tv_lambda},
          {"iters", fc.tv_iters},
          {"best_iteration", r.best_iteration},
          {"energy_initial", r.energy.front()},
          {"energy_final", r.energy.back()}};
    vol = std::move(r.volume);
  }
  const Mesh mesh = marching_cubes(vol);

  const fs::path out_dir = cfg.output;
  ensure_directory(out_dir);
  write_volume(out_dir / "volume.tsdf", vol);
  export_ply(mesh, out_dir / "mesh.ply", fc.ply_format == "ascii" ? PlyFormat::kAscii : PlyFormat::kBinary);

  std::size_t observed = 0;
  for (float w : vol.weight_data()) observed += w > 0.0f ? 1 : 0;
  std::array<std::size_t, kLabelCount> label_hist{};
  for (auto l : mesh.labels) ++label_hist[l];
  Json report{{"command", "fuse"},
              {"frames", frames.size()},
              {"dims", vol.dims()},
              {"origin", {vol.origin().x(), vol.origin().y(), vol.origin().z()}},
              {"voxel_size", vol.voxel_size()},
              {"truncation", vol.truncation()},
              {"observed_voxels", observed},
              {"vertices", mesh.vertices.size()},
              {"triangles", mesh.triangles.size()},
              {"vertex_labels", label_hist},
              {"tv_l1", tv},
              {"volume", (out_dir / "volume.tsdf").generic_string()},
              {"mesh", (out_dir / "mesh.ply").generic_string()}};
  write_json(out_dir / "fuse.json", report);
  return report;
}

// ---------------------------------------------------------------------------

inline Json run_eval_ate(const fs::path& gt_path, const fs::path& est_path, bool align) {
  const AteReport r = ate(load_trajectory(gt_path), load_trajectory(est_path), align);
  Json rot = Json::array();
  for (double e : r.per_frame_rotation_errors) rot.push_back(e * kDeg);
  return {{"command", "eval-ate"},
          {"aligned", r.aligned},
          {"rmse_translation", r.rmse_translation},
          {"mean", r.mean},
          {"median", r.median},
          {"max", r.max},
          {"per_frame_errors", r.per_frame_errors},
          {"per_frame_rotation_errors_deg", rot}};
}

}  // namespace arthromap::cli
