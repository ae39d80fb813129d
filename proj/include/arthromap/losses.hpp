#pragma once

// Self-supervised view-synthesis objective and supervised pose objective.
//
//   photometric   alpha * (1 - SSIM) / 2 + (1 - alpha) * |I_t - I_hat|
//   min reproj.   per-pixel minimum of the photometric error over sources
//   auto-mask     keep a pixel only if warping beats the unwarped sources
//   smoothness    |dx D| exp(-|dx I|) + |dy D| exp(-|dy I|)
//   self loss     mean(min reproj. over kept pixels) + lambda_smoo * smoothness
//   pose loss     weighted L1 on normalized and raw translation, L1 on
//                 normalized and raw Euler angles
//
// Every scalar reduction averages over valid pixels only; invalid pixels are
// excluded, never averaged in as zeros.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "arthromap/camera.hpp"
#include "arthromap/pose.hpp"
#include "arthromap/raster.hpp"
#include "arthromap/warp.hpp"

namespace arthromap {

struct LossConfig {
  double alpha = 0.85;
  double lambda_smoo = 1e-3;
  double ssim_c1 = 0.01 * 0.01;
  double ssim_c2 = 0.03 * 0.03;
  int ssim_window = 3;
  Vec3 trl_weights{0.5, 0.5, 1.0};
  double norm_epsilon = 1e-8;
  /// Smoothness on mean-normalized inverse depth instead of raw depth.
  bool smooth_normalized_disparity = false;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::kDomain, "loss config: alpha must lie in [0, 1]");
    if (!(lambda_smoo >= 0.0)) throw Error(ErrorCode::kDomain, "loss config: lambda_smoo must be >= 0");
    if (ssim_window < 3 || ssim_window % 2 == 0) {
      throw Error(ErrorCode::kDomain, "loss config: ssim_window must be odd and >= 3");
    }
    if (!(ssim_c1 > 0.0) || !(ssim_c2 > 0.0)) throw Error(ErrorCode::kDomain, "loss config: SSIM constants must be > 0");
    if (!(trl_weights.array() > 0.0).all()) throw Error(ErrorCode::kDomain, "loss config: trl_weights must be positive");
    if (!(norm_epsilon >= 0.0)) throw Error(ErrorCode::kDomain, "loss config: norm_epsilon must be >= 0");
  }
};

namespace detail {

inline void require_same_size(const ImageBuffer& a, const ImageBuffer& b, const char* what) {
  if (!a.same_size(b) || a.channels() != b.channels()) {
    throw Error(ErrorCode::kDimensionMismatch, std::string(what) + ": image dimensions differ");
  }
}

inline int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
  return i;
}

// Separable box mean with reflection at the borders.
class BoxFilter {
 public:
  BoxFilter(int w, int h, int window)
      : w_(w), h_(h), window_(window), r_(window / 2),
        xi_(static_cast<std::size_t>(w + 2 * (window / 2))), yi_(static_cast<std::size_t>(h + 2 * (window / 2))),
        tmp_(static_cast<std::size_t>(w) * h) {
    for (int i = 0; i < w + 2 * r_; ++i) xi_[i] = reflect(i - r_, w);
    for (int i = 0; i < h + 2 * r_; ++i) yi_[i] = reflect(i - r_, h);
  }

  void apply(const double* src, double* out) {
    for (int y = 0; y < h_; ++y) {
      const double* row = src + static_cast<std::size_t>(y) * w_;
      double* dst = tmp_.data() + static_cast<std::size_t>(y) * w_;
      const int lo = std::min(r_, w_), hi = std::max(lo, w_ - r_);
      for (int x = 0; x < lo; ++x) dst[x] = gather(row, x);
      if (r_ == 1) {
        for (int x = lo; x < hi; ++x) dst[x] = row[x - 1] + row[x] + row[x + 1];
      } else {
        for (int x = lo; x < hi; ++x) {
          double acc = 0.0;
          for (int k = -r_; k <= r_; ++k) acc += row[x + k];
          dst[x] = acc;
        }
      }
      for (int x = hi; x < w_; ++x) dst[x] = gather(row, x);
    }
    const double norm = 1.0 / (static_cast<double>(window_) * window_);
    for (int y = 0; y < h_; ++y) {
      double* dst = out + static_cast<std::size_t>(y) * w_;
      const double* first = tmp_.data() + static_cast<std::size_t>(yi_[y]) * w_;
      if (window_ == 3) {
        const double* mid = tmp_.data() + static_cast<std::size_t>(yi_[y + 1]) * w_;
        const double* last = tmp_.data() + static_cast<std::size_t>(yi_[y + 2]) * w_;
        for (int x = 0; x < w_; ++x) dst[x] = (first[x] + mid[x] + last[x]) * norm;
        continue;
      }
      for (int x = 0; x < w_; ++x) dst[x] = first[x];
      for (int k = 1; k < window_; ++k) {
        const double* row = tmp_.data() + static_cast<std::size_t>(yi_[y + k]) * w_;
        for (int x = 0; x < w_; ++x) dst[x] += row[x];
      }
      for (int x = 0; x < w_; ++x) dst[x] *= norm;
    }
  }

 private:
  double gather(const double* row, int x) const {
    double acc = 0.0;
    for (int k = 0; k < window_; ++k) acc += row[xi_[x + k]];
    return acc;
  }

  int w_, h_, window_, r_;
  std::vector<int> xi_, yi_;
  std::vector<double> tmp_;
};

inline std::vector<double> box_mean(const std::vector<double>& src, int w, int h, int window) {
  std::vector<double> out(src.size());
  BoxFilter(w, h, window).apply(src.data(), out.data());
  return out;
}

// Per-channel local mean and mean square of one image, planar.
struct SsimMoments {
  std::vector<double> plane, mu, e2;
};

inline void ssim_moments_into(const ImageBuffer& img, BoxFilter& box, SsimMoments& m, std::vector<double>& sq) {
  const std::size_t n = img.pixel_count();
  const int ch = img.channels();
  m.plane.resize(n * ch);
  m.mu.resize(n * ch);
  m.e2.resize(n * ch);
  sq.resize(n);
  for (int c = 0; c < ch; ++c) {
    double* p = m.plane.data() + c * n;
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = img.data()[i * ch + c];
      sq[i] = p[i] * p[i];
    }
    box.apply(p, m.mu.data() + c * n);
    box.apply(sq.data(), m.e2.data() + c * n);
  }
}

inline SsimMoments ssim_moments(const ImageBuffer& img, BoxFilter& box) {
  SsimMoments m;
  std::vector<double> sq;
  ssim_moments_into(img, box, m, sq);
  return m;
}

// SSIM from precomputed moments of both images; the cross term is formed
// here. Every expression is symmetric in a and b.
inline void ssim_from_moments_into(const SsimMoments& a, const SsimMoments& b, int w, int h, int ch, BoxFilter& box,
                                   const LossConfig& cfg, ScalarMap& out, std::vector<double>& prod,
                                   std::vector<double>& e_ab) {
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (out.same_size(w, h) && out.channels() == 1) {
    std::fill(out.data().begin(), out.data().end(), 0.0);
  } else {
    out = ScalarMap(w, h, 1, 0.0);
  }
  prod.resize(n);
  e_ab.resize(n);
  for (int c = 0; c < ch; ++c) {
    const double* pa = a.plane.data() + c * n;
    const double* pb = b.plane.data() + c * n;
    for (std::size_t i = 0; i < n; ++i) prod[i] = pa[i] * pb[i];
    box.apply(prod.data(), e_ab.data());
    const double* mu_a = a.mu.data() + c * n;
    const double* mu_b = b.mu.data() + c * n;
    const double* e_aa = a.e2.data() + c * n;
    const double* e_bb = b.e2.data() + c * n;
    double* dst = out.data().data();
    for (std::size_t i = 0; i < n; ++i) {
      const double sigma_a = e_aa[i] - mu_a[i] * mu_a[i];
      const double sigma_b = e_bb[i] - mu_b[i] * mu_b[i];
      const double sigma_ab = e_ab[i] - mu_a[i] * mu_b[i];
      const double num = (2.0 * (mu_a[i] * mu_b[i]) + cfg.ssim_c1) * (2.0 * sigma_ab + cfg.ssim_c2);
      const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + cfg.ssim_c1) * (sigma_a + sigma_b + cfg.ssim_c2);
      dst[i] += num / den;
    }
  }
  if (ch > 1) {
    for (double& v : out.data()) v /= ch;
  }
}

inline ScalarMap ssim_from_moments(const SsimMoments& a, const SsimMoments& b, int w, int h, int ch, BoxFilter& box,
                                   const LossConfig& cfg) {
  ScalarMap out;
  std::vector<double> prod, e_ab;
  ssim_from_moments_into(a, b, w, h, ch, box, cfg, out, prod, e_ab);
  return out;
}

inline void finish_photometric(ScalarMap& ssim_map, const ImageBuffer& target, const ImageBuffer& synth,
                               const LossConfig& cfg) {
  const int ch = target.channels();
  for (std::size_t i = 0; i < ssim_map.data().size(); ++i) {
    double l1 = 0.0;
    for (int c = 0; c < ch; ++c) l1 += std::abs(target.data()[i * ch + c] - synth.data()[i * ch + c]);
    l1 /= ch;
    const double dssim = std::clamp(0.5 * (1.0 - ssim_map.data()[i]), 0.0, 1.0);
    ssim_map.data()[i] = cfg.alpha * dssim + (1.0 - cfg.alpha) * l1;
  }
}

}  // namespace detail

/// Per-pixel SSIM over a box window, averaged over channels. Symmetric in
/// its arguments and exactly 1 for identical inputs.
inline ScalarMap ssim(const ImageBuffer& a, const ImageBuffer& b, const LossConfig& cfg = {}) {
  detail::require_same_size(a, b, "ssim");
  detail::BoxFilter box(a.width(), a.height(), cfg.ssim_window);
  return detail::ssim_from_moments(detail::ssim_moments(a, box), detail::ssim_moments(b, box), a.width(), a.height(),
                                   a.channels(), box, cfg);
}

/// Per-pixel photometric reprojection error between a target and a
/// reconstruction of it.
inline ScalarMap photometric(const ImageBuffer& target, const ImageBuffer& synth, const LossConfig& cfg = {}) {
  detail::require_same_size(target, synth, "photometric");
  ScalarMap out = ssim(target, synth, cfg);
  detail::finish_photometric(out, target, synth, cfg);
  return out;
}

struct MinReprojection {
  ScalarMap loss;                    ///< 0 where no source is valid
  Raster<int, ScalarTag> argmin;     ///< selected source index, -1 where none
  MaskBuffer valid;                  ///< 1 where at least one source is valid
};

namespace detail {

// `error(synth)` returns the per-pixel error map of one reconstruction; it
// may return a reference to a buffer it reuses between calls.
template <class ErrorFn>
void min_reprojection_into(const ImageBuffer& target, std::span<const SynthesizedView> synths, ErrorFn&& error,
                           MinReprojection& out) {
  if (synths.empty()) throw Error(ErrorCode::kEmptyInput, "min_reprojection: no synthesized sources");
  const int w = target.width(), h = target.height();
  if (out.loss.same_size(w, h) && out.argmin.same_size(w, h) && out.valid.same_size(w, h)) {
    std::fill(out.loss.data().begin(), out.loss.data().end(), 0.0);
    std::fill(out.argmin.data().begin(), out.argmin.data().end(), -1);
    std::fill(out.valid.data().begin(), out.valid.data().end(), std::uint8_t{0});
  } else {
    out = MinReprojection{ScalarMap(w, h, 1, 0.0), Raster<int, ScalarTag>(w, h, 1, -1), MaskBuffer(w, h)};
  }
  for (std::size_t s = 0; s < synths.size(); ++s) {
    if (!synths[s].mask.same_size(target)) {
      throw Error(ErrorCode::kDimensionMismatch, "min_reprojection: mask dimensions differ");
    }
    const ScalarMap& err = error(synths[s].image);
    for (std::size_t i = 0; i < err.data().size(); ++i) {
      if (!synths[s].mask.data()[i]) continue;
      if (!out.valid.data()[i] || err.data()[i] < out.loss.data()[i]) {
        out.loss.data()[i] = err.data()[i];
        out.argmin.data()[i] = static_cast<int>(s);
        out.valid.data()[i] = 1;
      }
    }
  }
}

template <class ErrorFn>
MinReprojection min_reprojection_with(const ImageBuffer& target, std::span<const SynthesizedView> synths,
                                      ErrorFn&& error) {
  MinReprojection out;
  min_reprojection_into(target, synths, error, out);
  return out;
}

}  // namespace detail

inline MinReprojection min_reprojection(const ImageBuffer& target, std::span<const SynthesizedView> synths,
                                        const LossConfig& cfg = {}) {
  return detail::min_reprojection_with(target, synths,
                                       [&](const ImageBuffer& synth) { return photometric(target, synth, cfg); });
}

/// Per-pixel minimum photometric error against the unwarped sources.
inline ScalarMap min_identity_reprojection(const ImageBuffer& target, std::span<const ImageBuffer> raw_sources,
                                           const LossConfig& cfg = {}) {
  if (raw_sources.empty()) throw Error(ErrorCode::kEmptyInput, "automask: no raw sources");
  ScalarMap best = photometric(target, raw_sources[0], cfg);
  for (std::size_t s = 1; s < raw_sources.size(); ++s) {
    const ScalarMap err = photometric(target, raw_sources[s], cfg);
    for (std::size_t i = 0; i < err.data().size(); ++i) best.data()[i] = std::min(best.data()[i], err.data()[i]);
  }
  return best;
}

/// Mask is 1 where the unwarped sources explain the target strictly worse
/// than the best valid reconstruction.
inline void automask_into(const ScalarMap& identity_min, const MinReprojection& reproj, MaskBuffer& mask) {
  if (!mask.same_size(identity_min.width(), identity_min.height())) {
    mask = MaskBuffer(identity_min.width(), identity_min.height());
  }
  for (std::size_t i = 0; i < mask.data().size(); ++i) {
    mask.data()[i] = reproj.valid.data()[i] && identity_min.data()[i] > reproj.loss.data()[i] ? 1 : 0;
  }
}

inline MaskBuffer automask_from(const ScalarMap& identity_min, const MinReprojection& reproj) {
  MaskBuffer mask;
  automask_into(identity_min, reproj, mask);
  return mask;
}

inline MaskBuffer automask(const ImageBuffer& target, std::span<const ImageBuffer> raw_sources,
                           std::span<const SynthesizedView> synths, const LossConfig& cfg = {}) {
  if (synths.empty()) throw Error(ErrorCode::kEmptyInput, "automask: no synthesized sources");
  for (const auto& s : raw_sources) detail::require_same_size(target, s, "automask");
  return automask_from(min_identity_reprojection(target, raw_sources, cfg), min_reprojection(target, synths, cfg));
}

/// Edge-aware smoothness of a depth map. Each direction averages over
/// pixel pairs where both depths are valid.
inline double smoothness(const DepthMap& depth, const ImageBuffer& guide, bool normalized_disparity = false) {
  if (!depth.same_size(guide)) throw Error(ErrorCode::kDimensionMismatch, "smoothness: depth and guide differ in size");
  const int w = depth.width(), h = depth.height(), ch = guide.channels();
  DepthMap field = depth;
  if (normalized_disparity) {
    double sum = 0.0;
    std::size_t count = 0;
    for (double& d : field.data()) {
      if (is_valid_depth(d)) {
        d = 1.0 / d;
        sum += d;
        ++count;
      }
    }
    if (count > 0) {
      const double mean = sum / count;
      for (double& d : field.data()) d /= mean;
    }
  }
  double sum_x = 0.0, sum_y = 0.0;
  std::size_t n_x = 0, n_y = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!is_valid_depth(depth(x, y))) continue;
      if (x + 1 < w && is_valid_depth(depth(x + 1, y))) {
        double g = 0.0;
        for (int c = 0; c < ch; ++c) g += std::abs(guide(x + 1, y, c) - guide(x, y, c));
        sum_x += std::abs(field(x + 1, y) - field(x, y)) * std::exp(-g / ch);
        ++n_x;
      }
      if (y + 1 < h && is_valid_depth(depth(x, y + 1))) {
        double g = 0.0;
        for (int c = 0; c < ch; ++c) g += std::abs(guide(x, y + 1, c) - guide(x, y, c));
        sum_y += std::abs(field(x, y + 1) - field(x, y)) * std::exp(-g / ch);
        ++n_y;
      }
    }
  }
  return (n_x ? sum_x / n_x : 0.0) + (n_y ? sum_y / n_y : 0.0);
}

struct SelfSupervisedResult {
  double loss = 0.0;
  double photometric_term = 0.0;
  double smoothness_term = 0.0;  ///< already multiplied by lambda_smoo
  std::size_t surviving_pixels = 0;
  std::vector<SynthesizedView> synths;
  MinReprojection reprojection;
  MaskBuffer automask;
};

/// The self-supervised objective for a fixed target, its raw sources and a
/// target depth map, evaluated for varying target-to-source poses. The
/// unwarped-source error and the smoothness term do not depend on the poses
/// and are computed once.
class SelfSupervisedObjective {
 public:
  SelfSupervisedObjective(ImageBuffer target, std::vector<ImageBuffer> raw_sources, DepthMap depth, Intrinsics k,
                          LossConfig cfg = {})
      : target_(std::move(target)), sources_(std::move(raw_sources)), depth_(std::move(depth)), k_(k), cfg_(cfg) {
    cfg_.validate();
    if (sources_.empty()) throw Error(ErrorCode::kEmptyInput, "self-supervised loss: no source frames");
    for (const auto& s : sources_) detail::require_same_size(target_, s, "self-supervised loss");
    if (!depth_.same_size(target_) || !target_.same_size(k_.width, k_.height)) {
      throw Error(ErrorCode::kDimensionMismatch, "self-supervised loss: depth/intrinsics size mismatch");
    }
    identity_min_ = min_identity_reprojection(target_, sources_, cfg_);
    detail::BoxFilter box(target_.width(), target_.height(), cfg_.ssim_window);
    target_moments_ = detail::ssim_moments(target_, box);
    smoothness_ = cfg_.lambda_smoo * smoothness(depth_, target_, cfg_.smooth_normalized_disparity);
  }

  std::size_t source_count() const { return sources_.size(); }
  const ImageBuffer& target() const { return target_; }
  const DepthMap& depth() const { return depth_; }
  const Intrinsics& intrinsics() const { return k_; }
  const LossConfig& config() const { return cfg_; }

  /// Reusable buffers for repeated evaluation. A workspace must not be
  /// shared between concurrent calls.
  struct Workspace {
    std::vector<SynthesizedView> synths;
    std::optional<detail::BoxFilter> box;
    detail::SsimMoments moments;
    std::vector<double> sq, prod, e_ab;
    ScalarMap error;
    MinReprojection reprojection;
    MaskBuffer automask;
  };

  SelfSupervisedResult evaluate(std::span<const PoseSE3> poses_t_to_s) const {
    Workspace ws;
    SelfSupervisedResult r = evaluate(poses_t_to_s, ws);
    r.synths = std::move(ws.synths);
    r.reprojection = std::move(ws.reprojection);
    r.automask = std::move(ws.automask);
    return r;
  }

  /// Scalar terms only; the maps are left in `ws`.
  SelfSupervisedResult evaluate(std::span<const PoseSE3> poses_t_to_s, Workspace& ws) const {
    if (poses_t_to_s.size() != sources_.size()) {
      throw Error(ErrorCode::kLengthMismatch, "self-supervised loss: need one pose per source");
    }
    const int w = target_.width(), h = target_.height();
    ws.synths.resize(sources_.size());
    for (std::size_t s = 0; s < sources_.size(); ++s) {
      synthesize_target_into(sources_[s], depth_, poses_t_to_s[s], k_, ws.synths[s]);
    }
    if (!ws.box) ws.box.emplace(w, h, cfg_.ssim_window);
    detail::min_reprojection_into(
        target_, ws.synths,
        [&](const ImageBuffer& synth) -> const ScalarMap& {
          detail::require_same_size(target_, synth, "photometric");
          detail::ssim_moments_into(synth, *ws.box, ws.moments, ws.sq);
          detail::ssim_from_moments_into(target_moments_, ws.moments, w, h, target_.channels(), *ws.box, cfg_, ws.error,
                                         ws.prod, ws.e_ab);
          detail::finish_photometric(ws.error, target_, synth, cfg_);
          return ws.error;
        },
        ws.reprojection);
    automask_into(identity_min_, ws.reprojection, ws.automask);
    SelfSupervisedResult r;
    double sum = 0.0;
    for (std::size_t i = 0; i < ws.automask.data().size(); ++i) {
      if (ws.automask.data()[i]) {
        sum += ws.reprojection.loss.data()[i];
        ++r.surviving_pixels;
      }
    }
    r.photometric_term = r.surviving_pixels ? sum / r.surviving_pixels : 0.0;
    r.smoothness_term = smoothness_;
    r.loss = r.photometric_term + r.smoothness_term;
    return r;
  }

  double value(std::span<const PoseSE3> poses_t_to_s, Workspace& ws) const { return evaluate(poses_t_to_s, ws).loss; }

  double value(std::span<const PoseSE3> poses_t_to_s) const { return evaluate(poses_t_to_s).loss; }

 private:
  ImageBuffer target_;
  std::vector<ImageBuffer> sources_;
  DepthMap depth_;
  Intrinsics k_;
  LossConfig cfg_;
  ScalarMap identity_min_;
  detail::SsimMoments target_moments_;
  double smoothness_ = 0.0;
};

inline SelfSupervisedResult self_supervised_loss(const ImageBuffer& target, std::span<const ImageBuffer> raw_sources,
                                                 const DepthMap& depth, std::span<const PoseSE3> poses_t_to_s,
                                                 const Intrinsics& k, const LossConfig& cfg = {}) {
  SelfSupervisedObjective objective(target, {raw_sources.begin(), raw_sources.end()}, depth, k, cfg);
  return objective.evaluate(poses_t_to_s);
}

// ---------------------------------------------------------------------------
// Pose supervision

struct PoseLossBreakdown {
  double trl_normalized = 0.0;  ///< weighted L1 between unit translations
  double trl = 0.0;             ///< weighted L1 between translations
  double ang_normalized = 0.0;  ///< L1 between unit Euler vectors
  double ang = 0.0;             ///< L1 between Euler vectors
  double total = 0.0;
};

namespace detail {

inline double weighted_l1(const Vec3& a, const Vec3& b, const Vec3& w) {
  return (w.array() * (a - b).array().abs()).sum();
}

// Weighted L1 between unit vectors; zero when either norm is below eps.
inline double normalized_term(const Vec3& gt, const Vec3& pred, const Vec3& w, double eps) {
  const double ng = gt.norm(), np = pred.norm();
  if (ng < eps || np < eps || ng == 0.0 || np == 0.0) return 0.0;
  return weighted_l1(gt / ng, pred / np, w);
}

}  // namespace detail

inline PoseLossBreakdown pose_loss(const PoseSE3& gt, const PoseSE3& pred, const LossConfig& cfg = {}) {
  const Vec3 ones = Vec3::Ones();
  PoseLossBreakdown b;
  b.trl_normalized = detail::normalized_term(gt.trl, pred.trl, cfg.trl_weights, cfg.norm_epsilon);
  b.trl = detail::weighted_l1(gt.trl, pred.trl, cfg.trl_weights);
  b.ang_normalized = detail::normalized_term(gt.rot, pred.rot, ones, cfg.norm_epsilon);
  b.ang = detail::weighted_l1(gt.rot, pred.rot, ones);
  b.total = (b.trl_normalized + b.trl) + (b.ang_normalized + b.ang);
  return b;
}

struct PoseSupervision {
  PoseSE3 gt;
  PoseSE3 pred;
};

struct TotalLossResult {
  double total = 0.0;
  SelfSupervisedResult self;
  std::optional<PoseLossBreakdown> pose;
};

/// Self-supervised loss plus, when a ground-truth pose is available, the
/// supervised pose loss.
inline TotalLossResult total_loss(const ImageBuffer& target, std::span<const ImageBuffer> raw_sources,
                                  const DepthMap& depth, std::span<const PoseSE3> poses_t_to_s, const Intrinsics& k,
                                  const LossConfig& cfg, const std::optional<PoseSupervision>& supervision) {
  TotalLossResult r;
  r.self = self_supervised_loss(target, raw_sources, depth, poses_t_to_s, k, cfg);
  r.total = r.self.loss;
  if (supervision) {
    r.pose = pose_loss(supervision->gt, supervision->pred, cfg);
    r.total = r.self.loss + r.pose->total;
  }
  return r;
}

}  // namespace arthromap
