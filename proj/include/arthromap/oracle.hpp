#pragma once

// Ray-cast ground truth for analytic scenes: stereo color images, metric
// depth and class labels, plus camera trajectories that sweep or orbit the
// scene. Used in place of recorded endoscopy data wherever exact ground
// truth is needed.
//
// Albedo is procedural value noise evaluated at the 3D hit point, so every
// view of a surface point sees the same albedo. With the default lighting
// (ambient only) the scene is photometrically constant across views; the
// optional point light rides on the camera and falls off with the inverse
// square of distance.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <variant>
#include <vector>

#include "arthromap/camera.hpp"
#include "arthromap/pose.hpp"
#include "arthromap/raster.hpp"
#include "arthromap/warp.hpp"

namespace arthromap::oracle {

struct Plane {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
};

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
};

/// Segment [a, b] swept by a ball of `radius`.
struct Capsule {
  Vec3 a = Vec3::Zero();
  Vec3 b = Vec3::UnitX();
  double radius = 1.0;
};

using Shape = std::variant<Plane, Sphere, Capsule>;

struct Primitive {
  Shape shape;
  Label label = Label::kOther;
  std::array<double, 3> color{0.8, 0.7, 0.6};
};

enum class TextureMode {
  kTextured,    ///< rich multi-octave albedo texture
  kLowTexture,  ///< nearly uniform albedo
};

struct TextureParams {
  double cell_mm = 12.0;
  int octaves = 4;
  double amplitude = 0.8;
};

inline TextureParams texture_params(TextureMode mode) {
  if (mode == TextureMode::kLowTexture) return {60.0, 1, 0.02};
  return {};
}

struct Lighting {
  double ambient = 1.0;
  bool point_light = false;
  double point_intensity = 0.6;
  double reference_distance = 50.0;  ///< mm at which the point light has unit falloff
};

struct Scene {
  std::vector<Primitive> primitives;
  TextureMode texture = TextureMode::kTextured;
  std::uint64_t seed = 1;
  Lighting lighting;
  std::array<double, 3> background{0.0, 0.0, 0.0};
  int supersample = 3;  ///< color samples per pixel side; depth and labels use the pixel center
};

// ---------------------------------------------------------------------------
// Procedural texture

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline double lattice_value(std::int64_t ix, std::int64_t iy, std::int64_t iz, std::uint64_t seed) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(ix));
  h = splitmix64(h ^ static_cast<std::uint64_t>(iy));
  h = splitmix64(h ^ static_cast<std::uint64_t>(iz));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double smooth(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

}  // namespace detail

/// C2-continuous value noise in [0, 1] with unit lattice spacing.
inline double value_noise(const Vec3& p, std::uint64_t seed) {
  const double fx = std::floor(p.x()), fy = std::floor(p.y()), fz = std::floor(p.z());
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy),
             iz = static_cast<std::int64_t>(fz);
  const double tx = detail::smooth(p.x() - fx), ty = detail::smooth(p.y() - fy), tz = detail::smooth(p.z() - fz);
  double c[2][2][2];
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) c[dz][dy][dx] = detail::lattice_value(ix + dx, iy + dy, iz + dz, seed);
  auto lerp = [](double a, double b, double t) { return a + t * (b - a); };
  const double y0 = lerp(lerp(c[0][0][0], c[0][0][1], tx), lerp(c[0][1][0], c[0][1][1], tx), ty);
  const double y1 = lerp(lerp(c[1][0][0], c[1][0][1], tx), lerp(c[1][1][0], c[1][1][1], tx), ty);
  return lerp(y0, y1, tz);
}

/// Fractal value noise in [0, 1].
inline double fractal_noise(const Vec3& p, const TextureParams& tex, std::uint64_t seed) {
  double sum = 0.0, norm = 0.0, amp = 1.0, freq = 1.0 / tex.cell_mm;
  for (int o = 0; o < tex.octaves; ++o) {
    sum += amp * value_noise(p * freq, seed + 7919ULL * o);
    norm += amp;
    amp *= 0.5;
    freq *= 2.0;
  }
  return sum / norm;
}

// ---------------------------------------------------------------------------
// Ray casting

struct Hit {
  double s = std::numeric_limits<double>::infinity();  ///< ray parameter
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::Zero();
  int primitive = -1;
};

namespace detail {

inline double nearest_root(double a, double half_b, double c) {
  const double disc = half_b * half_b - a * c;
  if (disc < 0.0) return std::numeric_limits<double>::infinity();
  const double sq = std::sqrt(disc);
  const double s0 = (-half_b - sq) / a;
  if (s0 > 0.0) return s0;
  const double s1 = (-half_b + sq) / a;
  return s1 > 0.0 ? s1 : std::numeric_limits<double>::infinity();
}

inline double intersect(const Plane& p, const Vec3& o, const Vec3& d) {
  const double nd = p.normal.dot(d);
  if (std::abs(nd) < 1e-15) return std::numeric_limits<double>::infinity();
  const double s = p.normal.dot(p.point - o) / nd;
  return s > 0.0 ? s : std::numeric_limits<double>::infinity();
}

inline double intersect(const Sphere& sp, const Vec3& o, const Vec3& d) {
  const Vec3 oc = o - sp.center;
  return nearest_root(d.squaredNorm(), oc.dot(d), oc.squaredNorm() - sp.radius * sp.radius);
}

inline double intersect(const Capsule& cap, const Vec3& o, const Vec3& d) {
  double best = std::min(intersect(Sphere{cap.a, cap.radius}, o, d), intersect(Sphere{cap.b, cap.radius}, o, d));
  const Vec3 axis = cap.b - cap.a;
  const double len2 = axis.squaredNorm();
  if (len2 > 0.0) {
    // Infinite cylinder around the axis, restricted to the segment span.
    const Vec3 oa = o - cap.a;
    const Vec3 d_perp = d - axis * (axis.dot(d) / len2);
    const Vec3 o_perp = oa - axis * (axis.dot(oa) / len2);
    const double a = d_perp.squaredNorm();
    if (a > 1e-18) {
      const double s = nearest_root(a, o_perp.dot(d_perp), o_perp.squaredNorm() - cap.radius * cap.radius);
      if (std::isfinite(s)) {
        const double t = axis.dot(oa + s * d) / len2;
        if (t >= 0.0 && t <= 1.0) best = std::min(best, s);
      }
    }
  }
  return best;
}

inline Vec3 normal_at(const Plane& p, const Vec3&) { return p.normal.normalized(); }
inline Vec3 normal_at(const Sphere& sp, const Vec3& x) { return (x - sp.center).normalized(); }
inline Vec3 normal_at(const Capsule& cap, const Vec3& x) {
  const Vec3 axis = cap.b - cap.a;
  const double len2 = axis.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp(axis.dot(x - cap.a) / len2, 0.0, 1.0) : 0.0;
  return (x - (cap.a + t * axis)).normalized();
}

}  // namespace detail

/// Nearest intersection of the ray o + s d (s > 0) with the scene.
inline Hit cast_ray(const Scene& scene, const Vec3& o, const Vec3& d) {
  Hit hit;
  for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
    const double s = std::visit([&](const auto& shape) { return detail::intersect(shape, o, d); },
                                scene.primitives[i].shape);
    if (s < hit.s) {
      hit.s = s;
      hit.primitive = static_cast<int>(i);
    }
  }
  if (hit.primitive >= 0) {
    hit.point = o + hit.s * d;
    hit.normal = std::visit([&](const auto& shape) { return detail::normal_at(shape, hit.point); },
                            scene.primitives[hit.primitive].shape);
  }
  return hit;
}

/// Signed distance to a primitive surface (planes: signed along normal).
inline double surface_distance(const Primitive& prim, const Vec3& x) {
  return std::visit(
      [&](const auto& s) -> double {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, Plane>) {
          return s.normal.normalized().dot(x - s.point);
        } else if constexpr (std::is_same_v<S, Sphere>) {
          return (x - s.center).norm() - s.radius;
        } else {
          const Vec3 axis = s.b - s.a;
          const double len2 = axis.squaredNorm();
          const double t = len2 > 0.0 ? std::clamp(axis.dot(x - s.a) / len2, 0.0, 1.0) : 0.0;
          return (x - (s.a + t * axis)).norm() - s.radius;
        }
      },
      prim.shape);
}

struct RenderedView {
  ImageBuffer image;
  DepthMap depth;
  LabelMap labels;
};

/// Renders one camera (camera-to-world `pose`).
inline RenderedView render_view(const Scene& scene, const PoseSE3& pose, const Intrinsics& k) {
  if (scene.supersample < 1) throw Error(ErrorCode::kDomain, "render_view: supersample must be >= 1");
  const TextureParams tex = texture_params(scene.texture);
  RenderedView out{ImageBuffer(k.width, k.height, 3), DepthMap(k.width, k.height), LabelMap(k.width, k.height)};
  const Mat3 r = pose.rotation();
  const Vec3 o = pose.trl;
  const int ss = scene.supersample;
  auto shade_hit = [&](const Hit& hit, std::array<double, 3>& rgb) {
    if (hit.primitive < 0) {
      rgb = scene.background;
      return;
    }
    const Primitive& prim = scene.primitives[hit.primitive];
    const double n = fractal_noise(hit.point, tex, scene.seed + 104729ULL * hit.primitive);
    double shade = scene.lighting.ambient;
    if (scene.lighting.point_light) {
      const Vec3 to_light = o - hit.point;
      const double dist = to_light.norm();
      const double cos_term = std::max(0.0, std::abs(hit.normal.dot(to_light / dist)));
      const double falloff = std::pow(scene.lighting.reference_distance / dist, 2);
      shade += scene.lighting.point_intensity * cos_term * falloff;
    }
    const double modulation = 1.0 - 0.5 * tex.amplitude + tex.amplitude * n;
    for (int c = 0; c < 3; ++c) rgb[c] = std::clamp(prim.color[c] * modulation * shade, 0.0, 1.0);
  };
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      // Unit-z camera ray, so the ray parameter equals camera-frame depth.
      const Hit center = cast_ray(scene, o, r * Vec3((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0));
      if (center.primitive >= 0) {
        out.depth(x, y) = center.s;
        out.labels(x, y) = static_cast<std::uint8_t>(scene.primitives[center.primitive].label);
      }
      std::array<double, 3> rgb{}, acc{};
      if (ss == 1) {
        shade_hit(center, acc);
      } else {
        for (int j = 0; j < ss; ++j) {
          for (int i = 0; i < ss; ++i) {
            const double px = x - 0.5 + (i + 0.5) / ss, py = y - 0.5 + (j + 0.5) / ss;
            shade_hit(cast_ray(scene, o, r * Vec3((px - k.cx) / k.fx, (py - k.cy) / k.fy, 1.0)), rgb);
            for (int c = 0; c < 3; ++c) acc[c] += rgb[c];
          }
        }
        for (double& v : acc) v /= ss * ss;
      }
      for (int c = 0; c < 3; ++c) out.image(x, y, c) = acc[c];
    }
  }
  return out;
}

struct StereoFrame {
  ImageBuffer left;
  ImageBuffer right;
  DepthMap depth;   ///< left view
  LabelMap labels;  ///< left view
};

/// Renders the left camera at `pose` (camera-to-world) and the right camera
/// `rig.baseline` mm along its +x axis.
inline StereoFrame render(const Scene& scene, const PoseSE3& pose, const StereoRig& rig) {
  RenderedView left = render_view(scene, pose, rig.intrinsics);
  const PoseSE3 right_pose = compose(pose, invert(stereo_pose(rig)));
  RenderedView right = render_view(scene, right_pose, rig.intrinsics);
  return {std::move(left.image), std::move(right.image), std::move(left.depth), std::move(left.labels)};
}

// ---------------------------------------------------------------------------
// Trajectories

inline constexpr double kFrameRate = 25.0;

/// Camera-to-world pose at `eye` looking at `target`; image y points roughly
/// along world +y.
inline PoseSE3 look_at(const Vec3& eye, const Vec3& target, const Vec3& down = Vec3::UnitY()) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = down.cross(z);
  if (x.norm() < 1e-9) x = Vec3::UnitX().cross(z);
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return PoseSE3::from_rotation(r, eye);
}

struct SweepOptions {
  int n = 100;
  double sweep = 10.0;  ///< mm between first and last camera position
  std::uint64_t seed = 1;
  PoseSE3 start;                              ///< camera-to-world pose of frame 0
  Vec3 direction = Vec3::UnitX();             ///< sweep direction in the start camera frame
  double rotation_amplitude = 2.0 * std::numbers::pi / 180.0;  ///< radians per axis
  double jitter = 0.0;                        ///< mm, smooth positional noise
  double speed_ratio = 20.0;                  ///< max/min per-frame speed
};

struct SweepStats {
  std::vector<double> translation_steps;  ///< mm between consecutive frames
  std::vector<double> rotation_steps;     ///< radians between consecutive frames
};

/// Translation-dominant sweep with a small rotational wobble. Per-frame speed
/// follows a smooth profile spanning a factor `speed_ratio` so consecutive
/// relative motions differ by up to that factor.
inline Trajectory orbit_trajectory(const Scene& scene, const SweepOptions& opt, SweepStats* stats = nullptr) {
  if (opt.n < 2) throw Error(ErrorCode::kDomain, "orbit_trajectory: need at least 2 frames");
  if (scene.primitives.empty()) throw Error(ErrorCode::kEmptyInput, "orbit_trajectory: empty scene");
  const double two_pi = 2.0 * std::numbers::pi;
  auto phase = [&](std::uint64_t salt) {
    return two_pi * static_cast<double>(detail::splitmix64(opt.seed ^ salt) >> 11) * 0x1.0p-53;
  };

  const int steps = opt.n - 1;
  std::vector<double> progress(opt.n, 0.0);
  const double speed_phase = phase(0x5eed);
  double total = 0.0;
  for (int i = 0; i < steps; ++i) {
    const double t = steps > 1 ? static_cast<double>(i) / (steps - 1) : 0.0;
    const double v = std::pow(opt.speed_ratio, 0.5 * (1.0 + std::sin(two_pi * t + speed_phase)));
    total += v;
    progress[i + 1] = total;
  }
  for (double& p : progress) p /= total;

  const Mat3 r0 = opt.start.rotation();
  const Vec3 dir = (r0 * opt.direction.normalized()).eval();
  const std::array<double, 3> rot_phase{phase(0xa1), phase(0xb2), phase(0xc3)};
  const std::array<double, 3> jit_phase{phase(0xd4), phase(0xe5), phase(0xf6)};

  Trajectory traj;
  for (int i = 0; i < opt.n; ++i) {
    const double t = static_cast<double>(i) / steps;
    Vec3 wobble, jitter;
    for (int a = 0; a < 3; ++a) {
      wobble[a] = opt.rotation_amplitude * std::sin(two_pi * t + rot_phase[a]);
      jitter[a] = opt.jitter * std::sin(two_pi * 2.0 * t + jit_phase[a]);
    }
    const Vec3 pos = opt.start.trl + opt.sweep * progress[i] * dir + jitter;
    const Mat3 rot = r0 * euler_to_rotation(wobble);
    traj.push_back(i / kFrameRate, PoseSE3::from_rotation(rot, pos));
  }
  if (stats) {
    stats->translation_steps.clear();
    stats->rotation_steps.clear();
    for (std::size_t i = 1; i < traj.size(); ++i) {
      const PoseSE3 rel = relative(traj[i - 1].pose, traj[i].pose);
      stats->translation_steps.push_back(rel.trl.norm());
      stats->rotation_steps.push_back(rotation_angle_between(Mat3::Identity(), rel.rotation()));
    }
  }
  return traj;
}

/// `n` cameras on a sphere of radius `distance` around `center`, spread on a
/// Fibonacci lattice and looking at the center.
inline Trajectory sphere_coverage_trajectory(const Vec3& center, double distance, int n) {
  if (n < 1) throw Error(ErrorCode::kDomain, "sphere_coverage_trajectory: need at least 1 frame");
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  Trajectory traj;
  for (int i = 0; i < n; ++i) {
    const double y = n > 1 ? 1.0 - 2.0 * (i + 0.5) / n : 0.0;
    const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
    const double phi = golden * i;
    const Vec3 dir(r * std::cos(phi), y, r * std::sin(phi));
    const Vec3 eye = center + distance * dir;
    // Pick an up hint that is never parallel to the viewing direction.
    const Vec3 hint = std::abs(dir.y()) > 0.9 ? Vec3::UnitZ() : Vec3::UnitY();
    traj.push_back(i / kFrameRate, look_at(eye, center, hint));
  }
  return traj;
}

}  // namespace arthromap::oracle
