#pragma once

// Truncated signed-distance volume with per-voxel label histograms,
// projective integration of posed depth frames, and TV-L1 regularization.
//
// Voxel (i, j, k) has its center at origin + voxel_size * (i, j, k). The sdf
// is stored normalized by the truncation distance and is positive in front
// of the observed surface.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "arthromap/camera.hpp"
#include "arthromap/pose.hpp"
#include "arthromap/raster.hpp"
#include "arthromap/raster_io.hpp"

namespace arthromap {

using Index3 = std::array<int, 3>;
using LabelCounts = std::array<std::uint16_t, kLabelCount>;

inline constexpr float kDefaultMaxWeight = 128.0f;

struct VolumeParams {
  double voxel_size = 1.0;  ///< mm
  double truncation = 4.0;  ///< mm
  float max_weight = kDefaultMaxWeight;
  std::optional<Index3> dims;  ///< auto-sized from the frames when empty
  Vec3 origin = Vec3::Zero();  ///< only used together with dims

  void validate() const {
    if (!(voxel_size > 0.0) || !std::isfinite(voxel_size)) throw Error(ErrorCode::kDomain, "volume: voxel_size must be positive");
    if (!(truncation >= voxel_size) || !std::isfinite(truncation)) {
      throw Error(ErrorCode::kDomain, "volume: truncation must be at least voxel_size");
    }
    if (!(max_weight >= 1.0f)) throw Error(ErrorCode::kDomain, "volume: max_weight must be >= 1");
    if (dims && ((*dims)[0] <= 0 || (*dims)[1] <= 0 || (*dims)[2] <= 0)) {
      throw Error(ErrorCode::kDegenerateSize, "volume: dims must be positive");
    }
    if (!origin.allFinite()) throw Error(ErrorCode::kDomain, "volume: origin is not finite");
  }
};

class TsdfVolume {
 public:
  TsdfVolume() = default;

  TsdfVolume(const Index3& dims, const Vec3& origin, double voxel_size, double truncation,
             float max_weight = kDefaultMaxWeight)
      : dims_(dims), origin_(origin), voxel_size_(voxel_size), truncation_(truncation), max_weight_(max_weight) {
    VolumeParams{voxel_size, truncation, max_weight, dims, origin}.validate();
    const std::size_t n = voxel_count();
    sdf_.assign(n, 1.0f);
    weight_.assign(n, 0.0f);
    counts_.assign(n, LabelCounts{});
  }

  const Index3& dims() const { return dims_; }
  const Vec3& origin() const { return origin_; }
  double voxel_size() const { return voxel_size_; }
  double truncation() const { return truncation_; }
  float max_weight() const { return max_weight_; }
  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims_[0]) * static_cast<std::size_t>(dims_[1]) * static_cast<std::size_t>(dims_[2]);
  }

  bool contains(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < dims_[0] && j < dims_[1] && k < dims_[2];
  }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * dims_[1] + j) * dims_[0] + i;
  }
  Vec3 voxel_center(int i, int j, int k) const { return origin_ + voxel_size_ * Vec3(i, j, k); }

  float sdf(int i, int j, int k) const { return sdf_[index(i, j, k)]; }
  float weight(int i, int j, int k) const { return weight_[index(i, j, k)]; }
  const LabelCounts& label_counts(int i, int j, int k) const { return counts_[index(i, j, k)]; }
  bool observed(int i, int j, int k) const { return weight_[index(i, j, k)] > 0.0f; }

  std::vector<float>& sdf_data() { return sdf_; }
  const std::vector<float>& sdf_data() const { return sdf_; }
  std::vector<float>& weight_data() { return weight_; }
  const std::vector<float>& weight_data() const { return weight_; }
  std::vector<LabelCounts>& label_data() { return counts_; }
  const std::vector<LabelCounts>& label_data() const { return counts_; }

  bool operator==(const TsdfVolume&) const = default;

 private:
  Index3 dims_{0, 0, 0};
  Vec3 origin_ = Vec3::Zero();
  double voxel_size_ = 1.0;
  double truncation_ = 1.0;
  float max_weight_ = kDefaultMaxWeight;
  std::vector<float> sdf_;
  std::vector<float> weight_;
  std::vector<LabelCounts> counts_;
};

/// Majority label of a histogram; ties go to ACL, then meniscus, then
/// cartilage, then other. An empty histogram yields other.
inline Label majority_label(const LabelCounts& counts) {
  int best = static_cast<int>(Label::kOther);
  for (int l = 1; l < kLabelCount; ++l) {
    if (counts[l] >= counts[best]) best = l;
  }
  return static_cast<Label>(best);
}

/// Fuses one depth frame (and optionally its labels) taken from the
/// camera-to-world `pose`.
inline void integrate(TsdfVolume& vol, const DepthMap& depth, const LabelMap* labels, const PoseSE3& pose,
                      const Intrinsics& k) {
  if (!pose.is_finite()) throw Error(ErrorCode::kDomain, "integrate: pose is not finite");
  k.validate();
  if (!depth.same_size(k.width, k.height)) throw Error(ErrorCode::kDimensionMismatch, "integrate: depth/intrinsics size mismatch");
  if (labels && !labels->same_size(depth)) throw Error(ErrorCode::kDimensionMismatch, "integrate: labels/depth size mismatch");
  if (labels) check_labels(*labels);

  const Mat3 rt = pose.rotation().transpose();
  const Vec3 base = rt * (vol.origin() - pose.trl);
  const Vec3 ax = rt.col(0) * vol.voxel_size(), ay = rt.col(1) * vol.voxel_size(), az = rt.col(2) * vol.voxel_size();
  const double trunc = vol.truncation();
  const float w_max = vol.max_weight();
  const Index3 n = vol.dims();
  auto& sdf = vol.sdf_data();
  auto& weight = vol.weight_data();
  auto& counts = vol.label_data();
  for (int kz = 0; kz < n[2]; ++kz) {
    for (int jy = 0; jy < n[1]; ++jy) {
      const Vec3 row = base + jy * ay + kz * az;
      std::size_t idx = vol.index(0, jy, kz);
      for (int ix = 0; ix < n[0]; ++ix, ++idx) {
        const Vec3 p = row + ix * ax;
        if (!(p.z() > 0.0)) continue;
        const long u = std::lround(k.fx * p.x() / p.z() + k.cx);
        const long v = std::lround(k.fy * p.y() / p.z() + k.cy);
        if (u < 0 || v < 0 || u >= k.width || v >= k.height) continue;
        const double d = depth(static_cast<int>(u), static_cast<int>(v));
        if (!is_valid_depth(d)) continue;
        const double raw = d - p.z();
        if (!(raw > -trunc)) continue;
        // Rounding the sample to float first makes repeated identical
        // updates reproduce the stored value exactly.
        const double s = static_cast<float>(std::clamp(raw / trunc, -1.0, 1.0));
        const double w = weight[idx];
        sdf[idx] = static_cast<float>((w * sdf[idx] + s) / (w + 1.0));
        weight[idx] = std::min(static_cast<float>(w + 1.0), w_max);
        if (labels && raw < trunc) {
          auto& c = counts[idx][(*labels)(static_cast<int>(u), static_cast<int>(v))];
          if (c < UINT16_MAX) ++c;
        }
      }
    }
  }
}

inline void integrate(TsdfVolume& vol, const DepthMap& depth, const std::optional<LabelMap>& labels,
                      const PoseSE3& pose, const Intrinsics& k) {
  integrate(vol, depth, labels ? &*labels : nullptr, pose, k);
}

struct FusionFrame {
  DepthMap depth;
  std::optional<LabelMap> labels;
  PoseSE3 pose;  ///< camera-to-world
};

/// Axis-aligned bounds of all valid depth samples of the frames in world
/// coordinates. Throws when no frame has a valid sample.
inline std::pair<Vec3, Vec3> observed_bounds(std::span<const FusionFrame> frames, const Intrinsics& k) {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto& f : frames) {
    const Mat3 r = f.pose.rotation();
    for (int y = 0; y < f.depth.height(); ++y) {
      for (int x = 0; x < f.depth.width(); ++x) {
        const double d = f.depth(x, y);
        if (!is_valid_depth(d)) continue;
        const Vec3 w = r * backproject(x, y, d, k) + f.pose.trl;
        lo = lo.cwiseMin(w);
        hi = hi.cwiseMax(w);
      }
    }
  }
  if (!(lo.x() <= hi.x())) throw Error(ErrorCode::kEmptyInput, "fuse: no valid depth in any frame");
  return {lo, hi};
}

/// Integrates every frame in order into a fresh volume. Without explicit
/// dims the volume covers the observed surface points padded by four
/// truncation distances, on a grid aligned to multiples of voxel_size.
inline TsdfVolume fuse_chunk(std::span<const FusionFrame> frames, const VolumeParams& params, const Intrinsics& k) {
  if (frames.empty()) throw Error(ErrorCode::kEmptyInput, "fuse: empty chunk");
  params.validate();
  TsdfVolume vol;
  if (params.dims) {
    vol = TsdfVolume(*params.dims, params.origin, params.voxel_size, params.truncation, params.max_weight);
  } else {
    auto [lo, hi] = observed_bounds(frames, k);
    const double pad = 4.0 * params.truncation, vs = params.voxel_size;
    Index3 dims{};
    Vec3 origin;
    for (int a = 0; a < 3; ++a) {
      const double first = std::floor((lo[a] - pad) / vs);
      const double last = std::ceil((hi[a] + pad) / vs);
      origin[a] = first * vs;
      dims[a] = static_cast<int>(last - first) + 1;
    }
    vol = TsdfVolume(dims, origin, vs, params.truncation, params.max_weight);
  }
  for (const auto& f : frames) integrate(vol, f.depth, f.labels, f.pose, k);
  return vol;
}

struct SdfQuery {
  double value = 1.0;
  bool observed = false;
};

/// Trilinear sdf at a world point. Observed only when all eight
/// surrounding voxels are.
inline SdfQuery query_sdf(const TsdfVolume& vol, const Vec3& point) {
  const Vec3 g = (point - vol.origin()) / vol.voxel_size();
  Index3 i0{};
  double t[3];
  for (int a = 0; a < 3; ++a) {
    if (!(g[a] >= 0.0) || !(g[a] <= vol.dims()[a] - 1)) return {};
    if (vol.dims()[a] == 1) {
      i0[a] = 0;
      t[a] = 0.0;
      continue;
    }
    i0[a] = std::min(static_cast<int>(std::floor(g[a])), vol.dims()[a] - 2);
    t[a] = g[a] - i0[a];
  }
  SdfQuery q{0.0, true};
  for (int c = 0; c < 8; ++c) {
    const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
    const double w = (dx ? t[0] : 1.0 - t[0]) * (dy ? t[1] : 1.0 - t[1]) * (dz ? t[2] : 1.0 - t[2]);
    const int i = std::min(i0[0] + dx, vol.dims()[0] - 1), j = std::min(i0[1] + dy, vol.dims()[1] - 1),
              k = std::min(i0[2] + dz, vol.dims()[2] - 1);
    if (!vol.observed(i, j, k)) return {};
    q.value += w * vol.sdf(i, j, k);
  }
  return q;
}

// ---------------------------------------------------------------------------
// TV-L1

struct TvL1Result {
  TsdfVolume volume;
  std::vector<double> energy;          ///< of the returned state after each iteration; energy[0] is the input
  std::vector<double> iterate_energy;  ///< of the raw primal-dual iterate
  int best_iteration = 0;              ///< primal-dual iterate returned (0 = input)
};

namespace detail {

// Forward-difference gradient with zero flux across the volume boundary.
template <class Fn>
void for_each_gradient(const Index3& n, const float* u, Fn&& fn) {
  const std::size_t sx = 1, sy = static_cast<std::size_t>(n[0]), sz = sy * n[1];
  std::size_t idx = 0;
  for (int k = 0; k < n[2]; ++k) {
    for (int j = 0; j < n[1]; ++j) {
      for (int i = 0; i < n[0]; ++i, ++idx) {
        const double c = u[idx];
        const double gx = i + 1 < n[0] ? u[idx + sx] - c : 0.0;
        const double gy = j + 1 < n[1] ? u[idx + sy] - c : 0.0;
        const double gz = k + 1 < n[2] ? u[idx + sz] - c : 0.0;
        fn(idx, gx, gy, gz);
      }
    }
  }
}

}  // namespace detail

/// Sum of |grad u| over all voxels plus lambda * sum w |u - f| over
/// observed voxels.
inline double tv_l1_energy(const TsdfVolume& u, const std::vector<float>& f, double lambda_data) {
  double tv = 0.0;
  detail::for_each_gradient(u.dims(), u.sdf_data().data(),
                            [&](std::size_t, double gx, double gy, double gz) { tv += std::sqrt(gx * gx + gy * gy + gz * gz); });
  double data = 0.0;
  const auto& w = u.weight_data();
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] > 0.0f) data += w[i] * std::abs(static_cast<double>(u.sdf_data()[i]) - f[i]);
  }
  return tv + lambda_data * data;
}

/// Minimizes the TV-L1 energy of the sdf by primal-dual iteration with the
/// fused sdf as data and the fusion weights as data weights. Unobserved
/// voxels have no data term and are filled in by the TV term, but keep
/// weight 0. The lowest-energy iterate is returned, so the recorded energy
/// of the returned state never increases.
inline TvL1Result regularize_tv_l1(const TsdfVolume& vol, double lambda_data, int iters) {
  if (!(lambda_data > 0.0) || !std::isfinite(lambda_data)) {
    throw Error(ErrorCode::kDomain, "regularize_tv_l1: lambda_data must be positive");
  }
  if (iters < 0) throw Error(ErrorCode::kDomain, "regularize_tv_l1: iters must be >= 0");
  const Index3 n = vol.dims();
  const std::size_t count = vol.voxel_count();
  const std::size_t sy = static_cast<std::size_t>(n[0]), sz = sy * n[1];
  const double sigma = 1.0 / std::sqrt(12.0), tau = sigma;
  const std::vector<float>& f = vol.sdf_data();
  const std::vector<float>& w = vol.weight_data();

  TvL1Result result{vol, {}, {}, 0};
  result.energy.push_back(tv_l1_energy(vol, f, lambda_data));
  result.iterate_energy.push_back(result.energy.back());
  double best = result.energy.back();

  TsdfVolume current = vol;
  std::vector<float>& u = current.sdf_data();
  std::vector<float> u_bar = u;
  std::vector<double> px(count, 0.0), py(count, 0.0), pz(count, 0.0);
  for (int it = 1; it <= iters; ++it) {
    detail::for_each_gradient(n, u_bar.data(), [&](std::size_t i, double gx, double gy, double gz) {
      const double qx = px[i] + sigma * gx, qy = py[i] + sigma * gy, qz = pz[i] + sigma * gz;
      const double scale = std::max(1.0, std::sqrt(qx * qx + qy * qy + qz * qz));
      px[i] = qx / scale;
      py[i] = qy / scale;
      pz[i] = qz / scale;
    });
    std::size_t idx = 0;
    for (int k = 0; k < n[2]; ++k) {
      for (int j = 0; j < n[1]; ++j) {
        for (int i = 0; i < n[0]; ++i, ++idx) {
          // Divergence, the negative adjoint of the forward difference.
          double div = 0.0;
          div += (i + 1 < n[0] ? px[idx] : 0.0) - (i > 0 ? px[idx - 1] : 0.0);
          div += (j + 1 < n[1] ? py[idx] : 0.0) - (j > 0 ? py[idx - sy] : 0.0);
          div += (k + 1 < n[2] ? pz[idx] : 0.0) - (k > 0 ? pz[idx - sz] : 0.0);
          const double old = u[idx];
          double v = old + tau * div;
          if (w[idx] > 0.0f) {
            const double shrink = tau * lambda_data * w[idx];
            const double r = v - f[idx];
            v = r > shrink ? v - shrink : (r < -shrink ? v + shrink : f[idx]);
          }
          const float next = static_cast<float>(std::clamp(v, -1.0, 1.0));
          u[idx] = next;
          u_bar[idx] = static_cast<float>(2.0 * next - old);
        }
      }
    }
    const double e = tv_l1_energy(current, f, lambda_data);
    result.iterate_energy.push_back(e);
    if (e < best) {
      best = e;
      result.volume.sdf_data() = u;
      result.best_iteration = it;
    }
    result.energy.push_back(best);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Snapshot I/O

inline std::string encode_volume(const TsdfVolume& vol) {
  std::string out = "TSDF";
  out.reserve(36 + vol.voxel_count() * 16);
  for (int a = 0; a < 3; ++a) detail::put_u32(out, static_cast<std::uint32_t>(vol.dims()[a]));
  for (int a = 0; a < 3; ++a) detail::put_f32(out, static_cast<float>(vol.origin()[a]));
  detail::put_f32(out, static_cast<float>(vol.voxel_size()));
  detail::put_f32(out, static_cast<float>(vol.truncation()));
  for (std::size_t i = 0; i < vol.voxel_count(); ++i) {
    detail::put_f32(out, vol.sdf_data()[i]);
    detail::put_f32(out, vol.weight_data()[i]);
    for (std::uint16_t c : vol.label_data()[i]) {
      out.push_back(static_cast<char>(c & 0xff));
      out.push_back(static_cast<char>(c >> 8));
    }
  }
  return out;
}

/// Decodes a snapshot. Geometry fields come back at float precision and the
/// weight cap is not stored.
inline TsdfVolume decode_volume(const std::string& bytes, float max_weight = kDefaultMaxWeight) {
  if (bytes.size() < 36 || bytes.compare(0, 4, "TSDF") != 0) throw Error(ErrorCode::kParse, "volume snapshot: bad header");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + 4;
  Index3 dims{};
  for (int a = 0; a < 3; ++a, p += 4) {
    const std::uint32_t d = detail::get_u32(p);
    if (d == 0 || d > (1u << 16)) throw Error(ErrorCode::kParse, "volume snapshot: bad dims");
    dims[a] = static_cast<int>(d);
  }
  Vec3 origin;
  for (int a = 0; a < 3; ++a, p += 4) origin[a] = detail::get_f32(p);
  const double vs = detail::get_f32(p);
  const double trunc = detail::get_f32(p + 4);
  p += 8;
  const std::size_t count = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  if (bytes.size() != 36 + count * 16) throw Error(ErrorCode::kParse, "volume snapshot: size does not match dims");
  TsdfVolume vol;
  try {
    vol = TsdfVolume(dims, origin, vs, trunc, max_weight);
  } catch (const Error& e) {
    throw Error(ErrorCode::kParse, std::string("volume snapshot: ") + e.what());
  }
  for (std::size_t i = 0; i < count; ++i, p += 16) {
    vol.sdf_data()[i] = detail::get_f32(p);
    vol.weight_data()[i] = detail::get_f32(p + 4);
    for (int l = 0; l < kLabelCount; ++l) {
      vol.label_data()[i][l] = static_cast<std::uint16_t>(p[8 + 2 * l] | (p[9 + 2 * l] << 8));
    }
  }
  return vol;
}

inline void write_volume(const std::filesystem::path& path, const TsdfVolume& vol) {
  detail::write_all(path, encode_volume(vol));
}

inline TsdfVolume read_volume(const std::filesystem::path& path) { return decode_volume(detail::read_all(path)); }

}  // namespace arthromap
