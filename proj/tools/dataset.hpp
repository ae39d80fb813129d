#pragma once

// On-disk dataset layout written by `synth` and read by the other
// subcommands:
//
//   dataset.json          camera, frame count, depth format
//   trajectory.txt        camera-to-world pose of every left frame
//   left_0000.png         8-bit RGB
//   right_0000.png        8-bit RGB
//   depth_0000.png|.bin   left depth, 16-bit PNG or raw float
//   labels_0000.png       left labels, palette PNG

#include <cstdio>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "arthromap/camera.hpp"
#include "arthromap/raster_io.hpp"
#include "arthromap/trajectory_io.hpp"

namespace arthromap::cli {

namespace fs = std::filesystem;

struct DatasetInfo {
  int frames = 0;
  StereoRig rig;
  std::string depth_format = "png";
};

inline fs::path frame_path(const fs::path& dir, const char* kind, int index, const char* ext = ".png") {
  char name[64];
  std::snprintf(name, sizeof name, "%s_%04d%s", kind, index, ext);
  return dir / name;
}

inline fs::path depth_path(const fs::path& dir, const DatasetInfo& info, int index) {
  return frame_path(dir, "depth", index, info.depth_format == "raw" ? ".bin" : ".png");
}

inline nlohmann::json dataset_json(const DatasetInfo& info) {
  const Intrinsics& k = info.rig.intrinsics;
  return {{"frames", info.frames},
          {"width", k.width},
          {"height", k.height},
          {"fx", k.fx},
          {"fy", k.fy},
          {"cx", k.cx},
          {"cy", k.cy},
          {"baseline", info.rig.baseline},
          {"depth_format", info.depth_format}};
}

inline DatasetInfo read_dataset_info(const fs::path& dir) {
  const fs::path path = dir / "dataset.json";
  if (!fs::exists(path)) throw Error(ErrorCode::kMissingFile, "dataset description not found: " + path.string());
  const auto j = nlohmann::json::parse(detail::read_all(path), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::kParse, "dataset.json is not a JSON object");
  DatasetInfo info;
  try {
    info.frames = j.at("frames").get<int>();
    Intrinsics& k = info.rig.intrinsics;
    k.width = j.at("width").get<int>();
    k.height = j.at("height").get<int>();
    k.fx = j.at("fx").get<double>();
    k.fy = j.at("fy").get<double>();
    k.cx = j.at("cx").get<double>();
    k.cy = j.at("cy").get<double>();
    info.rig.baseline = j.at("baseline").get<double>();
    info.depth_format = j.value("depth_format", std::string("png"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("dataset.json: ") + e.what());
  }
  info.rig.validate();
  if (info.frames < 0) throw Error(ErrorCode::kParse, "dataset.json: negative frame count");
  return info;
}

inline void require_frame(const DatasetInfo& info, int index) {
  if (index < 0 || index >= info.frames) {
    throw Error(ErrorCode::kDomain, "frame " + std::to_string(index) + " is outside the dataset (0.." +
                                        std::to_string(info.frames - 1) + ")");
  }
}

inline void require_file(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::kMissingFile, "file not found: " + path.string());
}

inline ImageBuffer load_left(const fs::path& dir, const DatasetInfo& info, int index) {
  require_frame(info, index);
  const auto path = frame_path(dir, "left", index);
  require_file(path);
  return read_image_png(path);
}

inline ImageBuffer load_right(const fs::path& dir, const DatasetInfo& info, int index) {
  require_frame(info, index);
  const auto path = frame_path(dir, "right", index);
  require_file(path);
  return read_image_png(path);
}

inline DepthMap load_depth(const fs::path& dir, const DatasetInfo& info, int index) {
  require_frame(info, index);
  const auto path = depth_path(dir, info, index);
  require_file(path);
  return read_depth(path);
}

inline std::optional<LabelMap> load_labels(const fs::path& dir, const DatasetInfo& info, int index) {
  require_frame(info, index);
  const auto path = frame_path(dir, "labels", index);
  if (!fs::exists(path)) return std::nullopt;
  return read_labels_png(path);
}

inline Trajectory load_trajectory(const fs::path& path) {
  require_file(path);
  return read_trajectory(path);
}

}  // namespace arthromap::cli
