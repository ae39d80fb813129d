#include <cmath>

#include <gtest/gtest.h>

#include "arthromap/optimizer.hpp"
#include "arthromap/oracle.hpp"
#include "support/oracles.hpp"

using namespace arthromap;
using testing_support::deg;

namespace {

struct Pair {
  Intrinsics k;
  oracle::RenderedView target, source;
  PoseSE3 truth;
};

Pair make_pair(int size) {
  oracle::Scene scene;
  scene.primitives.push_back({oracle::Plane{Vec3(0, 0, 55), Vec3(0.1, 0.05, -1).normalized()}, Label::kCartilage, {0.9, 0.75, 0.65}});
  scene.primitives.push_back({oracle::Sphere{Vec3(-9, -6, 38), 10}, Label::kMeniscus, {0.85, 0.55, 0.5}});
  Pair p;
  p.k = intrinsics_from_fov(87.5, size, size);
  const PoseSE3 src(Vec3(0.01, -0.015, 0.008), Vec3(1.5, -1.0, 0.8));
  p.target = oracle::render_view(scene, PoseSE3::identity(), p.k);
  p.source = oracle::render_view(scene, src, p.k);
  p.truth = relative(src, PoseSE3::identity());
  return p;
}

void expect_monotone(const PoseRecovery& r) {
  ASSERT_FALSE(r.trace.empty());
  for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_LE(r.trace[i], r.trace[i - 1]) << i;
}

}  // namespace

TEST(Optimizer, ConfigValidation) {
  OptimizerConfig c;
  EXPECT_NO_THROW(c.validate());
  c.max_iters = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.fd_step_trl = -1.0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Optimizer, ParamsRoundTrip) {
  const PoseSE3 p(Vec3(0.1, -0.2, 0.3), Vec3(4, 5, -6));
  const PoseSE3 q = detail::from_params(detail::to_params(p));
  EXPECT_EQ(q.rot, p.rot);
  EXPECT_EQ(q.trl, p.trl);
}

TEST(Optimizer, MinNormInHull) {
  using detail::Vec6;
  Vec6 a = Vec6::Zero(), b = Vec6::Zero();
  a[0] = 1.0;
  a[1] = 1.0;
  b[0] = -1.0;
  b[1] = 1.0;
  const Vec6 m = detail::min_norm_in_hull({a, b});
  EXPECT_NEAR(m[0], 0.0, 1e-9);
  EXPECT_NEAR(m[1], 1.0, 1e-9);
}

TEST(Optimizer, RecoversSmallPerturbations) {
  const Pair p = make_pair(96);
  const SelfSupervisedObjective obj(p.target.image, {p.source.image}, p.target.depth, p.k);
  for (double scale : {0.25, 0.5, 1.0}) {
    const PoseSE3 init(p.truth.rot + scale * Vec3(deg(1), -deg(1), deg(1)), p.truth.trl + scale * Vec3(0.8, 0.6, -0.8));
    const PoseRecovery r = recover_pose(obj, init);
    expect_monotone(r);
    EXPECT_LT(r.trace.back(), r.trace.front());
    EXPECT_LT((r.pose.trl - p.truth.trl).norm(), 0.5) << scale;
    EXPECT_LT(rotation_angle_between(r.pose.rotation(), p.truth.rotation()), deg(0.5)) << scale;
  }
}

TEST(Optimizer, StaysNearTruth) {
  const Pair p = make_pair(64);
  const SelfSupervisedObjective obj(p.target.image, {p.source.image}, p.target.depth, p.k);
  const PoseRecovery r = recover_pose(obj, p.truth);
  expect_monotone(r);
  EXPECT_LE(r.trace.back(), r.trace.front());
  EXPECT_LT((r.pose.trl - p.truth.trl).norm(), 0.2);
  EXPECT_LT(rotation_angle_between(r.pose.rotation(), p.truth.rotation()), deg(0.2));
}

TEST(Optimizer, FlatLossOnConstantImages) {
  const Intrinsics k = intrinsics_from_fov(87.5, 32, 32);
  const ImageBuffer img(32, 32, 3, 0.5);
  const SelfSupervisedObjective obj(img, {img}, DepthMap(32, 32, 1, 40.0), k);
  const PoseSE3 init(Vec3(0.01, 0, 0), Vec3(0.5, 0, 0));
  const PoseRecovery r = recover_pose(obj, init);
  EXPECT_EQ(r.status, OptimizerStatus::kFlatLoss);
  EXPECT_EQ(r.pose.rot, init.rot);
  EXPECT_EQ(r.pose.trl, init.trl);
}

TEST(Optimizer, DegenerateDepth) {
  const Pair p = make_pair(32);
  DepthMap sparse(32, 32, 1, 0.0);
  for (int x = 0; x < 32; ++x) sparse(x, 0) = 40.0;
  const SelfSupervisedObjective obj(p.target.image, {p.source.image}, sparse, p.k);
  try {
    recover_pose(obj, PoseSE3::identity());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateDepth);
  }
}

TEST(Optimizer, FixedPosesCount) {
  const Pair p = make_pair(32);
  const SelfSupervisedObjective obj(p.target.image, {p.source.image, p.source.image}, p.target.depth, p.k);
  EXPECT_THROW(recover_pose(obj, PoseSE3::identity()), Error);
}

TEST(Optimizer, NonFiniteInit) {
  const Pair p = make_pair(32);
  const SelfSupervisedObjective obj(p.target.image, {p.source.image}, p.target.depth, p.k);
  EXPECT_THROW(recover_pose(obj, PoseSE3(Vec3(NAN, 0, 0), Vec3::Zero())), Error);
}

TEST(Optimizer, Deterministic) {
  const Pair p = make_pair(48);
  const SelfSupervisedObjective obj(p.target.image, {p.source.image}, p.target.depth, p.k);
  const PoseSE3 init(p.truth.rot + Vec3(deg(1), 0, 0), p.truth.trl + Vec3(0.5, 0, 0));
  const PoseRecovery a = recover_pose(obj, init), b = recover_pose(obj, init);
  EXPECT_EQ(a.trace, b.trace);
  EXPECT_EQ(a.pose.trl, b.pose.trl);
  EXPECT_EQ(a.pose.rot, b.pose.rot);
}
