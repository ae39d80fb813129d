#pragma once

// Dense row-major rasters: color images, metric depth, class labels, masks.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "arthromap/errors.hpp"

namespace arthromap {

/// Row-major, channel-interleaved raster. `Tag` keeps semantically different
/// rasters (depth vs. intensity vs. labels) from mixing by accident.
template <typename T, typename Tag>
class Raster {
 public:
  using value_type = T;

  Raster() = default;
  Raster(int width, int height, int channels = 1, T fill = T{})
      : width_(width), height_(height), channels_(channels),
        data_(static_cast<std::size_t>(checked_count(width, height, channels)), fill) {}
  Raster(int width, int height, int channels, std::vector<T> data)
      : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    if (data_.size() != static_cast<std::size_t>(checked_count(width, height, channels))) {
      throw Error(ErrorCode::kDimensionMismatch, "raster: data length does not match dimensions");
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }
  bool empty() const { return data_.empty(); }

  T& operator()(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
  const T& operator()(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool same_size(int w, int h) const { return width_ == w && height_ == h; }
  template <typename U, typename OtherTag>
  bool same_size(const Raster<U, OtherTag>& o) const {
    return width_ == o.width() && height_ == o.height();
  }

  bool operator==(const Raster&) const = default;

 private:
  static long long checked_count(int w, int h, int c) {
    if (w < 0 || h < 0 || c <= 0) throw Error(ErrorCode::kDimensionMismatch, "raster: invalid dimensions");
    return static_cast<long long>(w) * h * c;
  }

  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<T> data_;
};

struct ImageTag {};
struct DepthTag {};
struct LabelTag {};
struct MaskTag {};
struct ScalarTag {};

/// Intensities in [0, 1]; 1 or 3 channels.
using ImageBuffer = Raster<double, ImageTag>;
/// Metric depth in mm; 0 marks an invalid pixel.
using DepthMap = Raster<double, DepthTag>;
/// Anatomical class ids, see `Label`.
using LabelMap = Raster<std::uint8_t, LabelTag>;
/// Binary per-pixel flags.
using MaskBuffer = Raster<std::uint8_t, MaskTag>;
/// Per-pixel real values (losses, gradients, SSIM).
using ScalarMap = Raster<double, ScalarTag>;

enum class Label : std::uint8_t {
  kOther = 0,
  kCartilage = 1,  ///< femur + tibia cartilage
  kMeniscus = 2,
  kAcl = 3,
};
inline constexpr int kLabelCount = 4;

inline bool is_valid_depth(double d) { return d > 0.0 && std::isfinite(d); }

inline void check_image(const ImageBuffer& img) {
  if (img.channels() != 1 && img.channels() != 3) {
    throw Error(ErrorCode::kDomain, "image: channel count must be 1 or 3");
  }
  for (double v : img.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::kDomain, "image: intensity outside [0, 1]");
  }
}

inline void check_depth(const DepthMap& depth) {
  for (double v : depth.data()) {
    if (v != 0.0 && !is_valid_depth(v)) throw Error(ErrorCode::kDomain, "depth: entries must be 0 or positive finite");
  }
}

inline void check_labels(const LabelMap& labels) {
  for (auto v : labels.data()) {
    if (v >= kLabelCount) throw Error(ErrorCode::kUnknownLabel, "labels: id " + std::to_string(v) + " out of range");
  }
}

// ---------------------------------------------------------------------------
// Sampling

enum class SampleMode {
  kValidity,  ///< out-of-bounds samples report in_bounds = false and color 0
  kClamp,     ///< coordinates are clamped to the image border
};

struct Sample {
  std::array<double, 3> color{0.0, 0.0, 0.0};
  bool in_bounds = false;
};

/// Bilinear interpolation at continuous pixel coordinates. The valid domain
/// is [0, W-1] x [0, H-1].
template <typename Tag>
Sample bilinear_sample(const Raster<double, Tag>& img, double u, double v,
                       SampleMode mode = SampleMode::kValidity) {
  Sample s;
  const double max_u = img.width() - 1;
  const double max_v = img.height() - 1;
  if (!(u >= 0.0 && u <= max_u && v >= 0.0 && v <= max_v)) {
    if (mode == SampleMode::kValidity || !std::isfinite(u) || !std::isfinite(v)) return s;
    u = std::clamp(u, 0.0, max_u);
    v = std::clamp(v, 0.0, max_v);
  }
  s.in_bounds = true;
  const int x0 = static_cast<int>(u);
  const int y0 = static_cast<int>(v);
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const double fx = u - x0;
  const double fy = v - y0;
  for (int c = 0; c < img.channels() && c < 3; ++c) {
    const double top = img(x0, y0, c) + fx * (img(x1, y0, c) - img(x0, y0, c));
    const double bottom = img(x0, y1, c) + fx * (img(x1, y1, c) - img(x0, y1, c));
    s.color[c] = top + fy * (bottom - top);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Gradients

struct Gradients {
  ScalarMap dx;  ///< a[x+1, y] - a[x, y], zero in the last column
  ScalarMap dy;  ///< a[x, y+1] - a[x, y], zero in the last row
};

/// Forward differences, per channel.
template <typename Tag>
Gradients gradients(const Raster<double, Tag>& a) {
  if (a.width() < 2 || a.height() < 2) {
    throw Error(ErrorCode::kDegenerateSize, "gradients: raster must be at least 2x2");
  }
  const int w = a.width(), h = a.height(), ch = a.channels();
  Gradients g{ScalarMap(w, h, ch), ScalarMap(w, h, ch)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        if (x + 1 < w) g.dx(x, y, c) = a(x + 1, y, c) - a(x, y, c);
        if (y + 1 < h) g.dy(x, y, c) = a(x, y + 1, c) - a(x, y, c);
      }
    }
  }
  return g;
}

}  // namespace arthromap
