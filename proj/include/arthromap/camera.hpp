#pragma once

// Pinhole camera model for rectified stereo endoscope frames.
//
// Conventions: pixel (i, j) samples the continuous coordinate (u = i, v = j),
// so the default principal point of a W x H image is ((W-1)/2, (H-1)/2).
// The camera looks down +z, x points right and y points down. All lengths are
// millimeters. Lens distortion is assumed to be removed by rectification.

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Core>

#include "arthromap/errors.hpp"

namespace arthromap {

using Vec3 = Eigen::Vector3d;

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  /// Throws kDomain if any field violates the pinhole invariants.
  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy)) {
      throw Error(ErrorCode::kDomain, "intrinsics: focal lengths must be positive and finite");
    }
    if (width <= 0 || height <= 0) {
      throw Error(ErrorCode::kDomain, "intrinsics: image size must be positive");
    }
    if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
      throw Error(ErrorCode::kDomain, "intrinsics: principal point outside the image");
    }
  }

  bool operator==(const Intrinsics&) const = default;
};

/// Rectified stereo pair: both views share `intrinsics`; the right camera sits
/// `baseline` mm along +x of the left camera with no relative rotation.
struct StereoRig {
  Intrinsics intrinsics;
  double baseline = 1.52;

  void validate() const {
    intrinsics.validate();
    if (!(baseline > 0.0) || !std::isfinite(baseline)) {
      throw Error(ErrorCode::kDomain, "stereo rig: baseline must be positive");
    }
  }
};

/// Intrinsics from a horizontal field of view, square pixels, centered
/// principal point.
inline Intrinsics intrinsics_from_fov(double fov_degrees, int width, int height) {
  if (!(fov_degrees > 0.0 && fov_degrees < 180.0)) {
    throw Error(ErrorCode::kDomain, "intrinsics_from_fov: fov must lie in (0, 180) degrees");
  }
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::kDomain, "intrinsics_from_fov: image size must be positive");
  }
  const double half = 0.5 * fov_degrees * std::numbers::pi / 180.0;
  Intrinsics k;
  k.fx = (0.5 * width) / std::tan(half);
  k.fy = k.fx;
  k.cx = 0.5 * (width - 1);
  k.cy = 0.5 * (height - 1);
  k.width = width;
  k.height = height;
  return k;
}

struct PixelDepth {
  double u = 0.0;
  double v = 0.0;
  double z = 0.0;
};

inline PixelDepth project(const Vec3& point, const Intrinsics& k) {
  if (!(point.z() > 0.0)) {
    throw Error(ErrorCode::kNonPositiveDepth, "project: point is not in front of the camera");
  }
  return {k.fx * point.x() / point.z() + k.cx, k.fy * point.y() / point.z() + k.cy, point.z()};
}

inline Vec3 backproject(double u, double v, double depth, const Intrinsics& k) {
  if (!(depth > 0.0)) {
    throw Error(ErrorCode::kDomain, "backproject: depth must be positive");
  }
  return {(u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth};
}

/// Rectified disparity in pixels of a point at depth `z`.
inline double disparity(const StereoRig& rig, double z) {
  return rig.intrinsics.fx * rig.baseline / z;
}

}  // namespace arthromap
