#pragma once

// Rigid motions parameterized as Euler angles plus translation.
//
// Euler convention: R = Rz(gamma) * Ry(beta) * Rx(alpha), i.e. intrinsic
// X-Y-Z roll-pitch-yaw. Angles are radians canonicalized to (-pi, pi];
// translations are millimeters. A PoseSE3 maps points x -> R x + t.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "arthromap/errors.hpp"

namespace arthromap {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double kPi = std::numbers::pi;
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  if (a > -kPi && a <= kPi) return a;
  double r = std::fmod(a + kPi, kTwoPi);
  if (r <= 0.0) r += kTwoPi;
  return r - kPi;
}

inline Mat3 euler_to_rotation(const Vec3& rot) {
  const double ca = std::cos(rot.x()), sa = std::sin(rot.x());
  const double cb = std::cos(rot.y()), sb = std::sin(rot.y());
  const double cg = std::cos(rot.z()), sg = std::sin(rot.z());
  Mat3 r;
  r << cg * cb, cg * sb * sa - sg * ca, cg * sb * ca + sg * sa,
       sg * cb, sg * sb * sa + cg * ca, sg * sb * ca - cg * sa,
       -sb,     cb * sa,                cb * ca;
  return r;
}

/// Inverse of euler_to_rotation. At gimbal lock (cos(beta) ~ 0) alpha is set
/// to zero and the remaining rotation about the collapsed axis goes into gamma.
inline Vec3 rotation_to_euler(const Mat3& r) {
  const double cb = std::hypot(r(0, 0), r(1, 0));
  double alpha, beta, gamma;
  if (cb > 1e-12) {
    alpha = std::atan2(r(2, 1), r(2, 2));
    beta = std::atan2(-r(2, 0), cb);
    gamma = std::atan2(r(1, 0), r(0, 0));
  } else {
    alpha = 0.0;
    beta = r(2, 0) < 0.0 ? std::numbers::pi / 2 : -std::numbers::pi / 2;
    gamma = std::atan2(-r(0, 1), r(1, 1));
  }
  return {wrap_angle(alpha), wrap_angle(beta), wrap_angle(gamma)};
}

struct PoseSE3 {
  Vec3 rot = Vec3::Zero();  ///< [alpha, beta, gamma] in radians
  Vec3 trl = Vec3::Zero();  ///< [x, y, z] in millimeters

  PoseSE3() = default;
  PoseSE3(const Vec3& rotation, const Vec3& translation)
      : rot(wrap_angle(rotation.x()), wrap_angle(rotation.y()), wrap_angle(rotation.z())),
        trl(translation) {}

  static PoseSE3 identity() { return {}; }
  static PoseSE3 translation(double x, double y, double z) { return {Vec3::Zero(), Vec3(x, y, z)}; }

  Mat3 rotation() const { return euler_to_rotation(rot); }

  Mat4 to_matrix() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = rotation();
    m.topRightCorner<3, 1>() = trl;
    return m;
  }

  static PoseSE3 from_matrix(const Mat4& m) {
    PoseSE3 p;
    p.rot = rotation_to_euler(m.topLeftCorner<3, 3>());
    p.trl = m.topRightCorner<3, 1>();
    return p;
  }

  static PoseSE3 from_rotation(const Mat3& r, const Vec3& t) {
    PoseSE3 p;
    p.rot = rotation_to_euler(r);
    p.trl = t;
    return p;
  }

  Vec3 apply(const Vec3& x) const { return rotation() * x + trl; }

  bool is_finite() const { return rot.allFinite() && trl.allFinite(); }
};

inline PoseSE3 compose(const PoseSE3& a, const PoseSE3& b) {
  const Mat3 ra = a.rotation();
  return PoseSE3::from_rotation(ra * b.rotation(), ra * b.trl + a.trl);
}

inline PoseSE3 invert(const PoseSE3& p) {
  const Mat3 rt = p.rotation().transpose();
  return PoseSE3::from_rotation(rt, -(rt * p.trl));
}

/// Motion from frame `a` to frame `b`: a^-1 * b.
inline PoseSE3 relative(const PoseSE3& a, const PoseSE3& b) { return compose(invert(a), b); }

/// Geodesic angle in radians between two rotations.
inline double rotation_angle_between(const Mat3& a, const Mat3& b) {
  const Mat3 r = a.transpose() * b;
  const Vec3 axis(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  return std::atan2(0.5 * axis.norm(), 0.5 * (r.trace() - 1.0));
}

// ---------------------------------------------------------------------------
// Trajectories

struct StampedPose {
  double timestamp = 0.0;  ///< seconds
  PoseSE3 pose;            ///< camera-to-world
};

class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(std::vector<StampedPose> frames) : frames_(std::move(frames)) { validate(); }

  void push_back(double timestamp, const PoseSE3& pose) {
    if (!frames_.empty() && !(timestamp > frames_.back().timestamp)) {
      throw Error(ErrorCode::kTimestampMismatch, "trajectory: timestamps must be strictly increasing");
    }
    frames_.push_back({timestamp, pose});
  }

  std::size_t size() const { return frames_.size(); }
  bool empty() const { return frames_.empty(); }
  const StampedPose& operator[](std::size_t i) const { return frames_[i]; }
  std::span<const StampedPose> frames() const { return frames_; }
  auto begin() const { return frames_.begin(); }
  auto end() const { return frames_.end(); }

 private:
  void validate() const {
    for (std::size_t i = 1; i < frames_.size(); ++i) {
      if (!(frames_[i].timestamp > frames_[i - 1].timestamp)) {
        throw Error(ErrorCode::kTimestampMismatch, "trajectory: timestamps must be strictly increasing");
      }
    }
  }

  std::vector<StampedPose> frames_;
};

// ---------------------------------------------------------------------------
// Absolute trajectory error

struct AteReport {
  double rmse_translation = 0.0;  ///< mm
  double mean = 0.0;
  double median = 0.0;
  double max = 0.0;
  std::vector<double> per_frame_errors;           ///< mm
  std::vector<double> per_frame_rotation_errors;  ///< radians, geodesic
  bool aligned = false;
};

/// Least-squares rigid transform (no scale) taking `src` onto `dst`.
inline PoseSE3 fit_rigid_alignment(std::span<const Vec3> src, std::span<const Vec3> dst) {
  const auto n = static_cast<double>(src.size());
  Vec3 mu_src = Vec3::Zero(), mu_dst = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    mu_src += src[i];
    mu_dst += dst[i];
  }
  mu_src /= n;
  mu_dst /= n;
  Mat3 cov = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) cov += (dst[i] - mu_dst) * (src[i] - mu_src).transpose();
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 s = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s(2, 2) = -1.0;
  const Mat3 r = svd.matrixU() * s * svd.matrixV().transpose();
  return PoseSE3::from_rotation(r, mu_dst - r * mu_src);
}

inline AteReport ate(const Trajectory& gt, const Trajectory& est, bool align) {
  if (gt.size() != est.size()) {
    throw Error(ErrorCode::kLengthMismatch, "ate: trajectories differ in length");
  }
  if (gt.empty()) throw Error(ErrorCode::kEmptyInput, "ate: empty trajectories");
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (std::abs(gt[i].timestamp - est[i].timestamp) > 1e-6) {
      throw Error(ErrorCode::kTimestampMismatch, "ate: timestamps differ at frame " + std::to_string(i));
    }
  }

  std::vector<Vec3> gt_pos, est_pos;
  gt_pos.reserve(gt.size());
  est_pos.reserve(est.size());
  for (std::size_t i = 0; i < gt.size(); ++i) {
    gt_pos.push_back(gt[i].pose.trl);
    est_pos.push_back(est[i].pose.trl);
  }

  Mat3 align_rot = Mat3::Identity();
  Vec3 align_trl = Vec3::Zero();
  if (align) {
    const PoseSE3 t = fit_rigid_alignment(est_pos, gt_pos);
    align_rot = t.rotation();
    align_trl = t.trl;
  }

  AteReport report;
  report.aligned = align;
  report.per_frame_errors.reserve(gt.size());
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const Vec3 p = align ? Vec3(align_rot * est_pos[i] + align_trl) : est_pos[i];
    const double e = (gt_pos[i] - p).norm();
    report.per_frame_errors.push_back(e);
    sum += e;
    sum_sq += e * e;
    report.max = std::max(report.max, e);
    report.per_frame_rotation_errors.push_back(
        rotation_angle_between(gt[i].pose.rotation(), align_rot * est[i].pose.rotation()));
  }
  const auto n = static_cast<double>(gt.size());
  report.rmse_translation = std::sqrt(sum_sq / n);
  report.mean = sum / n;
  std::vector<double> sorted = report.per_frame_errors;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  report.median = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
  return report;
}

}  // namespace arthromap
