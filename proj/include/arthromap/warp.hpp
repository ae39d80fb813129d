#pragma once

// Inverse-warp view synthesis.
//
// `pose_t_to_s` maps points expressed in the target camera frame into the
// source camera frame (X_s = R X_t + t). With camera-to-world poses T_t and
// T_s this is relative(T_s, T_t). Sign check for a rectified rig: the right
// camera sits at +baseline along x, so left->right is translation
// (-baseline, 0, 0) and a left pixel u reappears in the right image at
// u - fx * baseline / z.

#include <algorithm>
#include <cstdint>

#include "arthromap/camera.hpp"
#include "arthromap/pose.hpp"
#include "arthromap/raster.hpp"

namespace arthromap {

struct SynthesizedView {
  ImageBuffer image;
  MaskBuffer mask;  ///< 1 where the target pixel was reconstructed from the source
};

/// Writes the reconstruction into `out`, reusing its buffers when they
/// already have the right size.
inline void synthesize_target_into(const ImageBuffer& source, const DepthMap& target_depth, const PoseSE3& pose_t_to_s,
                                   const Intrinsics& k, SynthesizedView& out, SampleMode mode = SampleMode::kValidity) {
  if (!source.same_size(target_depth) || !source.same_size(k.width, k.height)) {
    throw Error(ErrorCode::kDimensionMismatch, "synthesize_target: source, depth and intrinsics disagree in size");
  }
  const int w = source.width(), h = source.height(), ch = source.channels();
  if (out.image.same_size(source) && out.image.channels() == ch && out.mask.same_size(source)) {
    std::fill(out.image.data().begin(), out.image.data().end(), 0.0);
    std::fill(out.mask.data().begin(), out.mask.data().end(), std::uint8_t{0});
  } else {
    out = SynthesizedView{ImageBuffer(w, h, ch), MaskBuffer(w, h)};
  }
  const Mat3 r = pose_t_to_s.rotation();
  const Vec3& t = pose_t_to_s.trl;
  const double inv_fx = 1.0 / k.fx, inv_fy = 1.0 / k.fy;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double d = target_depth(x, y);
      if (!is_valid_depth(d)) continue;
      const Vec3 p_t((x - k.cx) * inv_fx * d, (y - k.cy) * inv_fy * d, d);
      const Vec3 p_s = r * p_t + t;
      if (!(p_s.z() > 0.0)) continue;
      const double u = k.fx * p_s.x() / p_s.z() + k.cx;
      const double v = k.fy * p_s.y() / p_s.z() + k.cy;
      const Sample s = bilinear_sample(source, u, v, mode);
      if (!s.in_bounds) continue;
      for (int c = 0; c < ch; ++c) out.image(x, y, c) = s.color[c];
      out.mask(x, y) = 1;
    }
  }
}

inline SynthesizedView synthesize_target(const ImageBuffer& source, const DepthMap& target_depth,
                                         const PoseSE3& pose_t_to_s, const Intrinsics& k,
                                         SampleMode mode = SampleMode::kValidity) {
  SynthesizedView out;
  synthesize_target_into(source, target_depth, pose_t_to_s, k, out, mode);
  return out;
}

/// Target(left)-to-source(right) point transform of a rectified rig.
inline PoseSE3 stereo_pose(const StereoRig& rig) { return PoseSE3::translation(-rig.baseline, 0.0, 0.0); }

}  // namespace arthromap
