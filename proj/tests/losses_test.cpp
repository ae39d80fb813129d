#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "arthromap/losses.hpp"
#include "arthromap/oracle.hpp"
#include "support/oracles.hpp"

using namespace arthromap;
using testing_support::constant_image;
using testing_support::constant_ssim;
using testing_support::random_image;

namespace {

SynthesizedView full_view(ImageBuffer img) {
  MaskBuffer mask(img.width(), img.height(), 1, 1);
  return {std::move(img), std::move(mask)};
}

// Textured plane with a sphere in front, seen from the origin and from a
// nearby source camera.
struct OracleFixture {
  Intrinsics k = intrinsics_from_fov(87.5, 128, 128);
  oracle::RenderedView target, source;
  PoseSE3 truth;  // target-to-source

  OracleFixture() {
    oracle::Scene scene;
    scene.primitives.push_back({oracle::Plane{Vec3(0, 0, 55), Vec3(0.1, 0.05, -1).normalized()}, Label::kCartilage, {0.9, 0.75, 0.65}});
    scene.primitives.push_back({oracle::Sphere{Vec3(-9, -6, 38), 10}, Label::kMeniscus, {0.85, 0.55, 0.5}});
    const PoseSE3 src(Vec3(0.01, -0.015, 0.008), Vec3(1.5, -1.0, 0.8));
    target = oracle::render_view(scene, PoseSE3::identity(), k);
    source = oracle::render_view(scene, src, k);
    truth = relative(src, PoseSE3::identity());
  }
};

}  // namespace

TEST(LossConfig, Validate) {
  EXPECT_NO_THROW(LossConfig{}.validate());
  LossConfig c;
  c.alpha = 1.1;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.ssim_window = 4;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.lambda_smoo = -1;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.trl_weights = Vec3(0.5, 0.0, 1.0);
  EXPECT_THROW(c.validate(), Error);
}

TEST(Ssim, SelfIsExactlyOne) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    const ImageBuffer a = random_image(rng, 23, 17, trial % 2 ? 1 : 3);
    for (double v : testing_support::values(ssim(a, a))) ASSERT_EQ(v, 1.0);
  }
}

TEST(Ssim, SymmetricExactly) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const ImageBuffer a = random_image(rng, 19, 21), b = random_image(rng, 19, 21);
    EXPECT_EQ(ssim(a, b).data(), ssim(b, a).data());
  }
}

TEST(Ssim, ConstantImages) {
  const LossConfig cfg;
  const double expected = constant_ssim(0.5, 0.7, cfg.ssim_c1, cfg.ssim_c2);
  for (double v : testing_support::values(ssim(constant_image(8, 6, 0.5), constant_image(8, 6, 0.7)))) EXPECT_NEAR(v, expected, 1e-12);
}

TEST(Ssim, MatchesDirectWindowSums) {
  std::mt19937_64 rng(3);
  const LossConfig cfg;
  const ImageBuffer a = random_image(rng, 12, 9), b = random_image(rng, 12, 9);
  const ScalarMap s = ssim(a, b, cfg);
  for (int y = 0; y < 9; ++y) {
    for (int x = 0; x < 12; ++x) {
      EXPECT_NEAR(s(x, y), testing_support::naive_ssim_at(a, b, x, y, cfg.ssim_c1, cfg.ssim_c2), 1e-10);
    }
  }
}

TEST(Ssim, RangeAndMismatch) {
  std::mt19937_64 rng(4);
  for (double v : testing_support::values(ssim(random_image(rng, 15, 15), random_image(rng, 15, 15)))) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
  try {
    ssim(ImageBuffer(4, 4, 3), ImageBuffer(4, 5, 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
  EXPECT_THROW(ssim(ImageBuffer(4, 4, 3), ImageBuffer(4, 4, 1)), Error);
}

TEST(Photometric, IdenticalIsZero) {
  std::mt19937_64 rng(5);
  const ImageBuffer a = random_image(rng, 16, 16);
  for (double v : testing_support::values(photometric(a, a))) ASSERT_EQ(v, 0.0);
}

TEST(Photometric, PureL1) {
  LossConfig cfg;
  cfg.alpha = 0.0;
  for (double v : testing_support::values(photometric(constant_image(6, 6, 0.2), constant_image(6, 6, 0.5), cfg))) EXPECT_NEAR(v, 0.3, 1e-15);
}

TEST(Photometric, ComposedConstant) {
  const LossConfig cfg;
  const double s = constant_ssim(0.2, 0.5, cfg.ssim_c1, cfg.ssim_c2);
  const double expected = 0.85 * (1.0 - s) / 2.0 + 0.15 * 0.3;
  for (double v : testing_support::values(photometric(constant_image(6, 6, 0.2), constant_image(6, 6, 0.5), cfg))) EXPECT_NEAR(v, expected, 1e-12);
}

TEST(Photometric, NonNegative) {
  std::mt19937_64 rng(6);
  for (double v : testing_support::values(photometric(random_image(rng, 20, 20), random_image(rng, 20, 20)))) EXPECT_GE(v, 0.0);
}

TEST(MinReprojection, SingleSource) {
  std::mt19937_64 rng(7);
  const ImageBuffer t = random_image(rng, 14, 10);
  SynthesizedView v = full_view(random_image(rng, 14, 10));
  for (int x = 0; x < 14; ++x) v.mask(x, 3) = 0;
  const MinReprojection r = min_reprojection(t, std::span(&v, 1));
  const ScalarMap p = photometric(t, v.image);
  for (std::size_t i = 0; i < p.data().size(); ++i) {
    if (v.mask.data()[i]) {
      EXPECT_EQ(r.loss.data()[i], p.data()[i]);
      EXPECT_EQ(r.argmin.data()[i], 0);
      EXPECT_EQ(r.valid.data()[i], 1);
    } else {
      EXPECT_EQ(r.loss.data()[i], 0.0);
      EXPECT_EQ(r.argmin.data()[i], -1);
      EXPECT_EQ(r.valid.data()[i], 0);
    }
  }
}

TEST(MinReprojection, ExactCopyWins) {
  std::mt19937_64 rng(8);
  const ImageBuffer t = random_image(rng, 12, 12);
  std::vector<SynthesizedView> views{full_view(t), full_view(random_image(rng, 12, 12))};
  views[0].mask(4, 4) = 0;
  const MinReprojection r = min_reprojection(t, views);
  for (int y = 0; y < 12; ++y) {
    for (int x = 0; x < 12; ++x) {
      if (x == 4 && y == 4) {
        EXPECT_EQ(r.argmin(x, y), 1);
        continue;
      }
      EXPECT_EQ(r.loss(x, y), 0.0);
      EXPECT_EQ(r.argmin(x, y), 0);
    }
  }
}

TEST(MinReprojection, Dominance) {
  std::mt19937_64 rng(9);
  std::bernoulli_distribution keep(0.7);
  for (int trial = 0; trial < 5; ++trial) {
    const ImageBuffer t = random_image(rng, 16, 12);
    std::vector<SynthesizedView> views;
    for (int s = 0; s < 3; ++s) {
      views.push_back(full_view(random_image(rng, 16, 12)));
      for (auto& m : views.back().mask.data()) m = keep(rng) ? 1 : 0;
    }
    const MinReprojection r = min_reprojection(t, views);
    for (const auto& v : views) {
      const ScalarMap p = photometric(t, v.image);
      for (std::size_t i = 0; i < p.data().size(); ++i) {
        if (v.mask.data()[i]) ASSERT_LE(r.loss.data()[i], p.data()[i]);
      }
    }
  }
}

TEST(MinReprojection, Empty) {
  try {
    min_reprojection(ImageBuffer(4, 4, 3), std::span<const SynthesizedView>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyInput);
  }
}

TEST(Automask, StaticSceneRejectsEverything) {
  std::mt19937_64 rng(10);
  const ImageBuffer t = random_image(rng, 20, 20);
  const std::vector<ImageBuffer> raw{t};
  const std::vector<SynthesizedView> synths{full_view(t)};
  for (auto v : testing_support::values(automask(t, raw, synths))) ASSERT_EQ(v, 0);
}

TEST(Automask, PerfectSynthesisKeepsEverything) {
  std::mt19937_64 rng(11);
  const ImageBuffer t = random_image(rng, 20, 20);
  const std::vector<ImageBuffer> raw{random_image(rng, 20, 20)};
  const std::vector<SynthesizedView> synths{full_view(t)};
  for (auto v : testing_support::values(automask(t, raw, synths))) ASSERT_EQ(v, 1);
}

TEST(Automask, StaticBorderIsRejected) {
  // Arthroscope images show a circular field of view; the black surround is
  // fixed to the camera and does not move with the scene.
  const Intrinsics k = intrinsics_from_fov(87.5, 256, 256);
  oracle::Scene scene;
  scene.primitives.push_back({oracle::Plane{Vec3(0, 0, 50), Vec3(0, 0, -1)}, Label::kCartilage, {0.9, 0.8, 0.7}});
  const PoseSE3 src_pose = PoseSE3::translation(2.0, 0.5, 0.0);
  auto t = oracle::render_view(scene, PoseSE3::identity(), k);
  auto s = oracle::render_view(scene, src_pose, k);
  auto in_border = [&](int x, int y) { return std::hypot(x - k.cx, y - k.cy) > 100.0; };
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      if (!in_border(x, y)) continue;
      for (int c = 0; c < 3; ++c) t.image(x, y, c) = s.image(x, y, c) = 0.0;
    }
  }
  const std::vector<ImageBuffer> raw{s.image};
  const std::vector<SynthesizedView> synths{synthesize_target(s.image, t.depth, relative(src_pose, PoseSE3::identity()), k)};
  const MaskBuffer mask = automask(t.image, raw, synths);
  std::size_t rejected = 0, rejected_in_border = 0, border_pixels = 0;
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      if (in_border(x, y)) ++border_pixels;
      if (mask(x, y)) continue;
      ++rejected;
      if (in_border(x, y)) ++rejected_in_border;
    }
  }
  EXPECT_EQ(rejected_in_border, border_pixels);
  EXPECT_GT(static_cast<double>(rejected_in_border) / rejected, 0.9);
}

TEST(Smoothness, ConstantDepth) {
  std::mt19937_64 rng(12);
  EXPECT_EQ(smoothness(DepthMap(16, 16, 1, 42.0), random_image(rng, 16, 16)), 0.0);
}

TEST(Smoothness, RampWithFlatGuide) {
  const double c = 0.75;
  DepthMap d(10, 8);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 10; ++x) d(x, y) = 20.0 + c * x;
  }
  EXPECT_NEAR(smoothness(d, constant_image(10, 8, 0.4)), c, 1e-12);
  ImageBuffer edges = constant_image(10, 8, 0.0);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 10; x += 2) {
      for (int ch = 0; ch < 3; ++ch) edges(x, y, ch) = 1.0;
    }
  }
  EXPECT_LT(smoothness(d, edges), c);
}

TEST(Smoothness, InvalidPixelsExcluded) {
  DepthMap d(6, 6, 1, 30.0);
  d(2, 2) = 0.0;
  EXPECT_EQ(smoothness(d, constant_image(6, 6, 0.5)), 0.0);
  EXPECT_THROW(smoothness(d, constant_image(5, 6, 0.5)), Error);
}

TEST(SelfSupervised, StaticConstantSceneIsZero) {
  const Intrinsics k = intrinsics_from_fov(87.5, 32, 32);
  const ImageBuffer img = constant_image(32, 32, 0.6);
  const std::vector<ImageBuffer> sources{img, img};
  const std::vector<PoseSE3> poses(2);
  const SelfSupervisedResult r = self_supervised_loss(img, sources, DepthMap(32, 32, 1, 30.0), poses, k);
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(r.surviving_pixels, 0u);
}

TEST(SelfSupervised, LambdaZeroDropsSmoothness) {
  OracleFixture f;
  LossConfig cfg;
  const std::vector<ImageBuffer> sources{f.source.image};
  const std::vector<PoseSE3> poses{f.truth};
  const auto with = self_supervised_loss(f.target.image, sources, f.target.depth, poses, f.k, cfg);
  cfg.lambda_smoo = 0.0;
  const auto without = self_supervised_loss(f.target.image, sources, f.target.depth, poses, f.k, cfg);
  EXPECT_GT(with.smoothness_term, 0.0);
  EXPECT_EQ(without.smoothness_term, 0.0);
  EXPECT_EQ(without.loss, with.photometric_term);
  EXPECT_EQ(with.loss, with.photometric_term + with.smoothness_term);
}

TEST(SelfSupervised, TruePoseBeatsPerturbations) {
  OracleFixture f;
  const SelfSupervisedObjective obj(f.target.image, {f.source.image}, f.target.depth, f.k);
  const double at_truth = obj.value(std::vector<PoseSE3>{f.truth});
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> a(-testing_support::deg(1.0), testing_support::deg(1.0)), t(-1.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    const PoseSE3 p(f.truth.rot + Vec3(a(rng), a(rng), a(rng)), f.truth.trl + Vec3(t(rng), t(rng), t(rng)));
    EXPECT_LT(at_truth, obj.value(std::vector<PoseSE3>{p})) << i;
  }
}

TEST(SelfSupervised, WorkspaceMatchesFreshEvaluation) {
  OracleFixture f;
  const SelfSupervisedObjective obj(f.target.image, {f.source.image}, f.target.depth, f.k);
  SelfSupervisedObjective::Workspace ws;
  for (double s : {0.0, 0.3, -0.7}) {
    const std::vector<PoseSE3> p{PoseSE3(f.truth.rot + Vec3::Constant(0.01 * s), f.truth.trl + Vec3::Constant(s))};
    EXPECT_EQ(obj.value(p), obj.value(p, ws));
  }
}

TEST(SelfSupervised, FiniteDifferenceGradientDescends) {
  OracleFixture f;
  const SelfSupervisedObjective obj(f.target.image, {f.source.image}, f.target.depth, f.k);
  std::mt19937_64 rng(14);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 6; ++trial) {
    Eigen::Matrix<double, 6, 1> x;
    x << f.truth.rot, f.truth.trl;
    for (int i = 0; i < 3; ++i) x[i] += 0.01 * n(rng);
    for (int i = 3; i < 6; ++i) x[i] += 0.5 * n(rng);
    auto loss = [&](const Eigen::Matrix<double, 6, 1>& p) {
      return obj.value(std::vector<PoseSE3>{PoseSE3(p.head<3>(), p.tail<3>())});
    };
    Eigen::Matrix<double, 6, 1> g;
    for (int i = 0; i < 6; ++i) {
      const double h = i < 3 ? 1e-4 : 1e-3;
      Eigen::Matrix<double, 6, 1> xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      g[i] = (loss(xp) - loss(xm)) / (2.0 * h);
    }
    ASSERT_GT(g.norm(), 0.0);
    Eigen::Matrix<double, 6, 1> d = -g;
    d.head<3>() *= 0.002 / d.head<3>().cwiseAbs().maxCoeff();
    d.tail<3>() *= 0.1 / d.tail<3>().cwiseAbs().maxCoeff();
    EXPECT_LT(loss(x + d), loss(x)) << trial;
  }
}

TEST(SelfSupervised, SourcePoseCountMismatch) {
  OracleFixture f;
  const std::vector<ImageBuffer> sources{f.source.image};
  try {
    self_supervised_loss(f.target.image, sources, f.target.depth, std::vector<PoseSE3>(2), f.k);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kLengthMismatch);
  }
}

TEST(PoseLoss, ZeroAtTruth) {
  std::mt19937_64 rng(15);
  const PoseSE3 p = testing_support::random_pose(rng, 0.3, 5.0);
  const PoseLossBreakdown b = pose_loss(p, p);
  EXPECT_EQ(b.total, 0.0);
}

TEST(PoseLoss, AxisWeight) {
  const PoseLossBreakdown b = pose_loss(PoseSE3::translation(1, 0, 0), PoseSE3::translation(2, 0, 0));
  EXPECT_EQ(b.trl_normalized, 0.0);
  EXPECT_EQ(b.trl, 0.5);
  EXPECT_EQ(b.ang_normalized, 0.0);  // zero angles skip the normalized term
  EXPECT_EQ(b.ang, 0.0);
  EXPECT_EQ(b.total, 0.5);
}

TEST(PoseLoss, TranslationHomogeneity) {
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  for (int i = 0; i < 50; ++i) {
    const PoseSE3 g = testing_support::random_pose(rng, 0.2, 5.0), p = testing_support::random_pose(rng, 0.2, 5.0);
    const double k = scale(rng);
    const PoseLossBreakdown a = pose_loss(g, p);
    const PoseLossBreakdown b = pose_loss(PoseSE3(g.rot, k * g.trl), PoseSE3(p.rot, k * p.trl));
    EXPECT_NEAR(a.trl_normalized, b.trl_normalized, 1e-12);
    EXPECT_NEAR(k * a.trl, b.trl, 1e-12 * std::max(1.0, b.trl));
    EXPECT_GE(a.total, 0.0);
  }
}

TEST(PoseLoss, TinyMotionSkipsNormalizedTerms) {
  const PoseLossBreakdown b = pose_loss(PoseSE3(Vec3::Zero(), Vec3(1e-9, 0, 0)), PoseSE3::translation(0, 1, 0));
  EXPECT_EQ(b.trl_normalized, 0.0);
}

TEST(TotalLoss, WithoutSupervisionEqualsSelf) {
  OracleFixture f;
  const std::vector<ImageBuffer> sources{f.source.image};
  const std::vector<PoseSE3> poses{f.truth};
  const auto self = self_supervised_loss(f.target.image, sources, f.target.depth, poses, f.k);
  const auto total = total_loss(f.target.image, sources, f.target.depth, poses, f.k, {}, std::nullopt);
  EXPECT_EQ(total.total, self.loss);
  EXPECT_FALSE(total.pose.has_value());
}

TEST(TotalLoss, SumOfComponents) {
  OracleFixture f;
  const std::vector<ImageBuffer> sources{f.source.image};
  const std::vector<PoseSE3> poses{f.truth};
  const PoseSE3 pred(f.truth.rot * 1.1, f.truth.trl * 0.9);
  const auto total = total_loss(f.target.image, sources, f.target.depth, poses, f.k, {}, PoseSupervision{f.truth, pred});
  ASSERT_TRUE(total.pose.has_value());
  EXPECT_GT(total.pose->total, 0.0);
  EXPECT_EQ(total.total, total.self.loss + total.pose->total);
}

TEST(TotalLoss, PerfectPredictionIsZero) {
  // Fronto-parallel plane at fx * b / 2, so the right view is the left view
  // shifted by exactly two pixels; constant depth removes smoothness.
  const StereoRig rig{intrinsics_from_fov(90.0, 128, 128), 1.52};
  const double depth = rig.intrinsics.fx * rig.baseline / 2.0;
  oracle::Scene scene;
  scene.primitives.push_back({oracle::Plane{Vec3(0, 0, depth), Vec3(0, 0, -1)}, Label::kCartilage, {0.9, 0.8, 0.7}});
  const auto f = oracle::render(scene, PoseSE3::identity(), rig);
  const std::vector<ImageBuffer> sources{f.right};
  const std::vector<PoseSE3> poses{stereo_pose(rig)};
  const auto total =
      total_loss(f.left, sources, f.depth, poses, rig.intrinsics, {}, PoseSupervision{stereo_pose(rig), stereo_pose(rig)});
  EXPECT_GT(total.self.surviving_pixels, 0u);
  EXPECT_LT(total.total, 1e-6);
}
