#pragma once

// Relative-pose recovery by direct minimization of the self-supervised
// objective over the six Euler/translation parameters of the first source's
// target-to-source pose. Gradients are central finite differences; each
// accepted step satisfies the Armijo condition, so the loss trace never
// increases.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "arthromap/losses.hpp"

namespace arthromap {

struct OptimizerConfig {
  int max_iters = 200;
  double fd_step_rot = 1e-4;  ///< radians
  double fd_step_trl = 1e-3;  ///< mm
  double armijo_c = 1e-4;
  double init_step = 1.0;
  double tol_loss = 1e-10;
  /// Precondition the gradient with a BFGS inverse-Hessian estimate. When
  /// off, plain steepest descent.
  bool quasi_newton = true;
  int max_backtracks = 40;
  /// Trial steps are shrunk so no Euler angle moves more than this (radians)
  /// and no translation component more than max_step_trl (mm).
  double max_step_rot = 0.02;
  double max_step_trl = 1.0;
  /// When neither the quasi-Newton nor the steepest-descent direction
  /// admits a step, the direction is the minimum-norm convex combination
  /// of gradients sampled around the current pose. The sampling radius
  /// starts at these values and shrinks tenfold per failed attempt, for at
  /// most sample_levels attempts.
  double sample_radius_rot = 2e-3;  ///< radians
  double sample_radius_trl = 0.1;   ///< mm
  int sample_count = 8;
  int sample_levels = 3;
  std::uint64_t sample_seed = 1;

  void validate() const {
    if (max_iters <= 0 || !(fd_step_rot > 0.0) || !(fd_step_trl > 0.0) || !(armijo_c > 0.0) ||
        !(init_step > 0.0) || !(tol_loss > 0.0) || max_backtracks <= 0 || !(max_step_rot > 0.0) || !(max_step_trl > 0.0) ||
        !(sample_radius_rot > 0.0) || !(sample_radius_trl > 0.0) || sample_count < 1 || sample_levels < 0) {
      throw Error(ErrorCode::kDomain, "optimizer config: all parameters must be positive");
    }
  }
};

enum class OptimizerStatus {
  kConverged,       ///< loss decrease fell below tol_loss
  kStationary,      ///< no descent step found; at a (numerical) minimum
  kFlatLoss,        ///< finite-difference gradient is exactly zero
  kMaxIterations,   ///< iteration budget exhausted; best-so-far pose returned
};

inline std::string_view to_string(OptimizerStatus s) {
  switch (s) {
    case OptimizerStatus::kConverged: return "converged";
    case OptimizerStatus::kStationary: return "stationary";
    case OptimizerStatus::kFlatLoss: return "flat_loss";
    case OptimizerStatus::kMaxIterations: return "max_iterations";
  }
  return "unknown";
}

struct PoseRecovery {
  PoseSE3 pose;
  std::vector<double> trace;  ///< loss of the current iterate; trace[0] is the initial loss
  std::vector<double> gradient_norms;
  int iterations = 0;
  int loss_evaluations = 0;
  OptimizerStatus status = OptimizerStatus::kMaxIterations;

  bool converged() const { return status != OptimizerStatus::kMaxIterations && status != OptimizerStatus::kFlatLoss; }
};

namespace detail {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

inline Vec6 to_params(const PoseSE3& p) {
  Vec6 x;
  x << p.rot, p.trl;
  return x;
}

inline PoseSE3 from_params(const Vec6& x) {
  PoseSE3 p;
  p.rot = x.head<3>();
  p.trl = x.tail<3>();
  return p;
}

// Minimum-norm point of the convex hull of `g` by Frank-Wolfe iteration
// with exact line search.
inline Vec6 min_norm_in_hull(const std::vector<Vec6>& g) {
  Vec6 p = g.back();
  for (int it = 0; it < 200; ++it) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < g.size(); ++i) {
      if (g[i].dot(p) < g[best].dot(p)) best = i;
    }
    const Vec6 d = g[best] - p;
    const double dd = d.squaredNorm();
    if (dd == 0.0 || -p.dot(d) <= 1e-12 * p.squaredNorm()) break;
    p += std::clamp(-p.dot(d) / dd, 0.0, 1.0) * d;
  }
  return p;
}

}  // namespace detail

/// Recovers the target-to-source pose of `objective`'s first source.
/// Additional sources, if any, keep the poses in `fixed_poses`.
inline PoseRecovery recover_pose(const SelfSupervisedObjective& objective, const PoseSE3& init,
                                 const OptimizerConfig& opt = {}, std::span<const PoseSE3> fixed_poses = {}) {
  using detail::Vec6;
  using detail::Mat6;
  opt.validate();
  if (!init.is_finite()) throw Error(ErrorCode::kDomain, "recover_pose: initial pose is not finite");
  if (fixed_poses.size() + 1 != objective.source_count()) {
    throw Error(ErrorCode::kLengthMismatch, "recover_pose: need a fixed pose for every source after the first");
  }
  std::size_t valid = 0;
  for (double d : objective.depth().data()) valid += is_valid_depth(d) ? 1 : 0;
  if (valid == 0 || valid * 10 < objective.depth().pixel_count()) {
    throw Error(ErrorCode::kDegenerateDepth, "recover_pose: fewer than 10% of depth pixels are valid");
  }

  PoseRecovery result;
  std::vector<PoseSE3> poses(objective.source_count());
  for (std::size_t i = 0; i < fixed_poses.size(); ++i) poses[i + 1] = fixed_poses[i];
  SelfSupervisedObjective::Workspace workspace;
  auto loss = [&](const Vec6& x) {
    poses[0] = detail::from_params(x);
    ++result.loss_evaluations;
    return objective.value(poses, workspace);
  };

  Vec6 steps;
  steps << Vec3::Constant(opt.fd_step_rot), Vec3::Constant(opt.fd_step_trl);
  auto gradient = [&](const Vec6& x) {
    Vec6 g;
    for (int i = 0; i < 6; ++i) {
      Vec6 xp = x, xm = x;
      xp[i] += steps[i];
      xm[i] -= steps[i];
      g[i] = (loss(xp) - loss(xm)) / (2.0 * steps[i]);
    }
    return g;
  };

  Vec6 x = detail::to_params(init);
  double fx = loss(x);
  result.trace.push_back(fx);
  Vec6 g = gradient(x);
  result.gradient_norms.push_back(g.norm());
  if (g.isZero(0.0)) {
    result.pose = detail::from_params(x);
    result.status = OptimizerStatus::kFlatLoss;
    return result;
  }

  // Direction order after a failed line search: quasi-Newton, steepest
  // descent, then sampled gradients at shrinking radii.
  enum class Direction { kQuasiNewton, kSteepest, kSampled };
  const Direction first = opt.quasi_newton ? Direction::kQuasiNewton : Direction::kSteepest;
  Direction mode = first;
  int level = 0;
  std::mt19937_64 rng(opt.sample_seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Vec6 radius;
  radius << Vec3::Constant(opt.sample_radius_rot), Vec3::Constant(opt.sample_radius_trl);
  Mat6 h_inv = Mat6::Identity();
  result.status = OptimizerStatus::kMaxIterations;
  while (result.iterations < opt.max_iters) {
    Vec6 dir = -g;
    if (mode == Direction::kQuasiNewton) dir = -(h_inv * g);
    if (mode == Direction::kSampled) {
      std::vector<Vec6> samples{g};
      const Vec6 r = radius * std::pow(0.1, level);
      for (int i = 0; i < opt.sample_count; ++i) {
        Vec6 u;
        for (auto& c : u) c = unit(rng);
        samples.push_back(gradient(x + r.cwiseProduct(u)));
      }
      dir = -detail::min_norm_in_hull(samples);
    }
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      dir = -g;
      slope = -g.squaredNorm();
    }
    double step = opt.init_step;
    const double rot_len = step * dir.head<3>().cwiseAbs().maxCoeff();
    const double trl_len = step * dir.tail<3>().cwiseAbs().maxCoeff();
    if (rot_len > opt.max_step_rot) step *= opt.max_step_rot / rot_len;
    if (trl_len > opt.max_step_trl) step *= opt.max_step_trl / trl_len;
    bool accepted = false;
    Vec6 x_new;
    double f_new = fx;
    for (int b = 0; b < opt.max_backtracks; ++b) {
      x_new = x + step * dir;
      f_new = loss(x_new);
      if (f_new <= fx + opt.armijo_c * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    ++result.iterations;
    if (!accepted) {
      if (mode == Direction::kQuasiNewton) {
        mode = Direction::kSteepest;
      } else if (mode == Direction::kSteepest && opt.sample_levels > 0) {
        mode = Direction::kSampled;
        level = 0;
      } else if (mode == Direction::kSampled && level + 1 < opt.sample_levels) {
        ++level;
      } else {
        result.status = OptimizerStatus::kStationary;
        break;
      }
      continue;
    }
    const double decrease = fx - f_new;
    const Vec6 g_new = gradient(x_new);
    const Vec6 s = x_new - x;
    const Vec6 y = g_new - g;
    const double sy = s.dot(y);
    if (mode != Direction::kQuasiNewton) h_inv.setIdentity();
    if (opt.quasi_newton && sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Mat6 ident = Mat6::Identity();
      h_inv = (ident - rho * s * y.transpose()) * h_inv * (ident - rho * y * s.transpose()) + rho * s * s.transpose();
    }
    x = x_new;
    fx = f_new;
    g = g_new;
    result.trace.push_back(fx);
    result.gradient_norms.push_back(g.norm());
    const Direction used = mode;
    mode = first;
    if (decrease < opt.tol_loss) {
      // A stalled step gets the fallback directions before stopping.
      if (used != Direction::kSampled || level + 1 < opt.sample_levels) {
        mode = used == Direction::kQuasiNewton ? Direction::kSteepest : Direction::kSampled;
        level = used == Direction::kSampled ? level + 1 : 0;
        continue;
      }
      result.status = OptimizerStatus::kConverged;
      break;
    }
  }
  result.pose = detail::from_params(x);
  return result;
}

/// Convenience overload building the objective from raw inputs.
inline PoseRecovery recover_pose(const ImageBuffer& target, std::span<const ImageBuffer> sources, const DepthMap& depth,
                                 const Intrinsics& k, const PoseSE3& init, const LossConfig& cfg = {},
                                 const OptimizerConfig& opt = {}, std::span<const PoseSE3> fixed_poses = {}) {
  SelfSupervisedObjective objective(target, {sources.begin(), sources.end()}, depth, k, cfg);
  return recover_pose(objective, init, opt, fixed_poses);
}

}  // namespace arthromap
