#pragma once

// Trajectory text files.
//
// Native format, one frame per line:
//   timestamp x y z alpha beta gamma
// in seconds / mm / radians. Lines starting with '#' and blank lines are
// ignored. Values are written with 17 significant digits so a write/read
// cycle reproduces every double exactly.
//
// The 8-field quaternion format (timestamp tx ty tz qx qy qz qw) is accepted
// by read_quaternion_trajectory.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <Eigen/Geometry>

#include "arthromap/pose.hpp"

namespace arthromap {

namespace detail {

template <typename RowFn>
Trajectory parse_trajectory_lines(std::istream& in, std::size_t fields, RowFn&& make_pose) {
  Trajectory traj;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream row(line);
    std::vector<double> v;
    double x;
    while (row >> x) v.push_back(x);
    if (!row.eof() || v.size() != fields) {
      throw Error(ErrorCode::kParse, "trajectory line " + std::to_string(line_no) + ": expected " +
                                         std::to_string(fields) + " numeric fields");
    }
    traj.push_back(v[0], make_pose(v));
  }
  return traj;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMissingFile, "cannot open " + path.string());
  return in;
}

}  // namespace detail

inline Trajectory read_trajectory(std::istream& in) {
  return detail::parse_trajectory_lines(in, 7, [](const std::vector<double>& v) {
    return PoseSE3(Vec3(v[4], v[5], v[6]), Vec3(v[1], v[2], v[3]));
  });
}

inline Trajectory read_trajectory(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return read_trajectory(in);
}

inline Trajectory read_quaternion_trajectory(std::istream& in) {
  return detail::parse_trajectory_lines(in, 8, [](const std::vector<double>& v) {
    Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
    if (!(q.norm() > 0.0)) throw Error(ErrorCode::kParse, "quaternion trajectory: zero quaternion");
    q.normalize();
    return PoseSE3::from_rotation(q.toRotationMatrix(), Vec3(v[1], v[2], v[3]));
  });
}

inline Trajectory read_quaternion_trajectory(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return read_quaternion_trajectory(in);
}

inline std::string format_trajectory(const Trajectory& traj) {
  std::string out;
  char buf[512];
  for (const auto& f : traj) {
    const auto& p = f.pose;
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g %.17g %.17g %.17g\n", f.timestamp, p.trl.x(),
                  p.trl.y(), p.trl.z(), p.rot.x(), p.rot.y(), p.rot.z());
    out += buf;
  }
  return out;
}

inline void write_trajectory(const std::filesystem::path& path, const Trajectory& traj) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << "# timestamp x y z alpha beta gamma\n" << format_trajectory(traj);
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

}  // namespace arthromap
