#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "arthromap/trajectory_io.hpp"
#include "support/oracles.hpp"

using namespace arthromap;
using testing_support::random_pose;
using testing_support::reference_rotation;

namespace {

void expect_matrix_near(const Mat4& a, const Mat4& b, double tol) {
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), tol) << "\n" << a << "\n--\n" << b;
}

Trajectory line_trajectory(int n, const Vec3& offset = Vec3::Zero()) {
  Trajectory t;
  for (int i = 0; i < n; ++i) {
    t.push_back(i * 0.04, PoseSE3(Vec3(0.01 * i, -0.02 * i, 0.005 * i), Vec3(i, 0.5 * i * i, -0.2 * i) + offset));
  }
  return t;
}

Trajectory transformed(const Trajectory& t, const PoseSE3& g) {
  Trajectory out;
  for (const auto& f : t) out.push_back(f.timestamp, compose(g, f.pose));
  return out;
}

}  // namespace

TEST(Euler, MatchesAxisAngleProduct) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const PoseSE3 p = random_pose(rng, 3.0);
    EXPECT_LT((p.rotation() - reference_rotation(p.rot)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Euler, RotationIsOrthonormal) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const Mat3 r = random_pose(rng, 3.0).rotation();
    EXPECT_LT((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-9);
  }
}

TEST(Euler, MatrixRoundTrip) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> a(-3.1, 3.1), b(-std::numbers::pi / 2 + 0.1, std::numbers::pi / 2 - 0.1);
  for (int i = 0; i < 500; ++i) {
    const PoseSE3 p(Vec3(a(rng), b(rng), a(rng)), Vec3(a(rng), a(rng), a(rng)));
    const PoseSE3 q = PoseSE3::from_matrix(p.to_matrix());
    EXPECT_LT((p.rot - q.rot).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((p.trl - q.trl).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Euler, GimbalLockKeepsMatrix) {
  for (double beta : {std::numbers::pi / 2, -std::numbers::pi / 2}) {
    const PoseSE3 p(Vec3(0.3, beta, -0.7), Vec3::Zero());
    const PoseSE3 q = PoseSE3::from_matrix(p.to_matrix());
    EXPECT_EQ(q.rot.x(), 0.0);
    expect_matrix_near(p.to_matrix(), q.to_matrix(), 1e-9);
  }
}

TEST(Euler, AnglesCanonicalized) {
  const PoseSE3 p(Vec3(3 * std::numbers::pi, -std::numbers::pi, 7.0), Vec3::Zero());
  for (int a = 0; a < 3; ++a) {
    EXPECT_GT(p.rot[a], -std::numbers::pi);
    EXPECT_LE(p.rot[a], std::numbers::pi);
  }
  EXPECT_NEAR(p.rot.x(), std::numbers::pi, 1e-12);
  EXPECT_NEAR(p.rot.y(), std::numbers::pi, 1e-12);
}

TEST(Compose, IdentityIsNeutral) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 100; ++i) {
    const PoseSE3 p = random_pose(rng);
    const PoseSE3 q = compose(PoseSE3::identity(), p);
    EXPECT_LT((p.rot - q.rot).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((p.trl - q.trl).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Compose, MatchesMatrixProduct) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const PoseSE3 a = random_pose(rng), b = random_pose(rng);
    expect_matrix_near(compose(a, b).to_matrix(), a.to_matrix() * b.to_matrix(), 1e-9);
  }
}

TEST(Compose, Translations) {
  const PoseSE3 p = compose(PoseSE3::translation(1, 2, 3), PoseSE3::translation(4, 5, 6));
  EXPECT_EQ(p.trl, Vec3(5, 7, 9));
  EXPECT_EQ(p.rot, Vec3::Zero());
}

TEST(Compose, Associative) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 100; ++i) {
    const PoseSE3 a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
    expect_matrix_near(compose(compose(a, b), c).to_matrix(), compose(a, compose(b, c)).to_matrix(), 1e-8);
  }
}

TEST(Invert, Basics) {
  const PoseSE3 id = invert(PoseSE3::identity());
  EXPECT_EQ(id.trl, Vec3::Zero());
  EXPECT_EQ(id.rot, Vec3::Zero());
  const PoseSE3 t = invert(PoseSE3::translation(1, -2, 3));
  EXPECT_EQ(t.trl, Vec3(-1, 2, -3));
  EXPECT_EQ(t.rot, Vec3::Zero());
}

TEST(Invert, MatchesMatrixInverseAndIsInvolution) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 100; ++i) {
    const PoseSE3 p = random_pose(rng);
    expect_matrix_near(invert(p).to_matrix(), p.to_matrix().inverse(), 1e-9);
    expect_matrix_near(compose(p, invert(p)).to_matrix(), Mat4::Identity(), 1e-9);
    const PoseSE3 q = invert(invert(p));
    EXPECT_LT((p.rot - q.rot).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((p.trl - q.trl).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Relative, Basics) {
  std::mt19937_64 rng(8);
  const PoseSE3 p = random_pose(rng);
  expect_matrix_near(relative(p, p).to_matrix(), Mat4::Identity(), 1e-12);
  const PoseSE3 r = relative(PoseSE3::identity(), PoseSE3::translation(1, 0, 0));
  EXPECT_EQ(r.trl, Vec3(1, 0, 0));
  EXPECT_EQ(r.rot, Vec3::Zero());
}

TEST(Relative, ComposesBackAndChains) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 100; ++i) {
    const PoseSE3 a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
    expect_matrix_near(compose(a, relative(a, b)).to_matrix(), b.to_matrix(), 1e-9);
    expect_matrix_near(compose(relative(a, b), relative(b, c)).to_matrix(), relative(a, c).to_matrix(), 1e-8);
  }
}

TEST(RotationAngle, KnownAngles) {
  EXPECT_EQ(rotation_angle_between(Mat3::Identity(), Mat3::Identity()), 0.0);
  const PoseSE3 p(Vec3(0, 0, 0.3), Vec3::Zero());
  EXPECT_NEAR(rotation_angle_between(Mat3::Identity(), p.rotation()), 0.3, 1e-12);
  const PoseSE3 q(Vec3(0, 0, 3.0), Vec3::Zero());
  EXPECT_NEAR(rotation_angle_between(q.rotation(), Mat3::Identity()), 3.0, 1e-12);
}

TEST(Trajectory, TimestampsStrictlyIncrease) {
  Trajectory t;
  t.push_back(0.0, {});
  EXPECT_THROW(t.push_back(0.0, {}), Error);
  EXPECT_THROW(Trajectory({{1.0, {}}, {0.5, {}}}), Error);
}

TEST(Ate, IdenticalIsZero) {
  const Trajectory t = line_trajectory(20);
  const AteReport r = ate(t, t, false);
  EXPECT_EQ(r.rmse_translation, 0.0);
  EXPECT_EQ(r.max, 0.0);
  EXPECT_EQ(r.per_frame_errors.size(), t.size());
  EXPECT_FALSE(r.aligned);
  for (double e : r.per_frame_rotation_errors) EXPECT_EQ(e, 0.0);
  const AteReport a = ate(t, t, true);
  EXPECT_TRUE(a.aligned);
  EXPECT_LT(a.rmse_translation, 1e-9);
  for (double e : a.per_frame_rotation_errors) EXPECT_LT(e, 1e-12);
}

TEST(Ate, ConstantOffset) {
  const Trajectory gt = line_trajectory(20), est = line_trajectory(20, Vec3(3, 4, 0));
  const AteReport r = ate(gt, est, false);
  EXPECT_NEAR(r.rmse_translation, 5.0, 1e-9);
  EXPECT_NEAR(r.mean, 5.0, 1e-9);
  EXPECT_NEAR(r.median, 5.0, 1e-9);
  EXPECT_LT(ate(gt, est, true).rmse_translation, 1e-9);
}

TEST(Ate, StatisticsOrdering) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n(0, 1);
  const Trajectory gt = line_trajectory(15);
  Trajectory est;
  for (const auto& f : gt) est.push_back(f.timestamp, PoseSE3(f.pose.rot, f.pose.trl + Vec3(n(rng), n(rng), n(rng))));
  const AteReport r = ate(gt, est, false);
  EXPECT_GE(r.rmse_translation, r.mean);
  EXPECT_GE(r.max, r.rmse_translation);
  EXPECT_GE(r.mean, 0.0);
}

TEST(Ate, InvariantUnderCommonTransformWithoutAlignment) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0, 0.5);
  const Trajectory gt = line_trajectory(12);
  Trajectory est;
  for (const auto& f : gt) est.push_back(f.timestamp, PoseSE3(f.pose.rot, f.pose.trl + Vec3(n(rng), n(rng), n(rng))));
  const PoseSE3 g = random_pose(rng);
  EXPECT_NEAR(ate(gt, est, false).rmse_translation,
              ate(transformed(gt, g), transformed(est, g), false).rmse_translation, 1e-9);
}

TEST(Ate, AlignmentAbsorbsTransformOfEstimate) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0, 0.5);
  const Trajectory gt = line_trajectory(12);
  Trajectory est;
  for (const auto& f : gt) est.push_back(f.timestamp, PoseSE3(f.pose.rot, f.pose.trl + Vec3(n(rng), n(rng), n(rng))));
  const PoseSE3 g = random_pose(rng);
  EXPECT_NEAR(ate(gt, est, true).rmse_translation, ate(gt, transformed(est, g), true).rmse_translation, 1e-9);
  EXPECT_LT(ate(gt, transformed(gt, g), true).rmse_translation, 1e-9);
}

TEST(Ate, Errors) {
  const Trajectory a = line_trajectory(5), b = line_trajectory(6);
  try {
    ate(a, b, false);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kLengthMismatch);
  }
  Trajectory c;
  for (const auto& f : a) c.push_back(f.timestamp + 0.001, f.pose);
  try {
    ate(a, c, false);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTimestampMismatch);
  }
}

TEST(TrajectoryIo, RoundTripIsExact) {
  std::mt19937_64 rng(13);
  Trajectory t;
  for (int i = 0; i < 30; ++i) t.push_back(i / 25.0, random_pose(rng));
  std::istringstream in("# header\n\n" + format_trajectory(t));
  const Trajectory u = read_trajectory(in);
  ASSERT_EQ(u.size(), t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_EQ(u[i].timestamp, t[i].timestamp);
    EXPECT_EQ(u[i].pose.rot, t[i].pose.rot);
    EXPECT_EQ(u[i].pose.trl, t[i].pose.trl);
  }
}

TEST(TrajectoryIo, Quaternion) {
  std::istringstream in("0 1 2 3 0 0 0.7071067811865476 0.7071067811865476\n");
  const Trajectory t = read_quaternion_trajectory(in);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t[0].pose.trl, Vec3(1, 2, 3));
  EXPECT_NEAR(t[0].pose.rot.z(), std::numbers::pi / 2, 1e-12);
}

TEST(TrajectoryIo, Malformed) {
  std::istringstream in("0 1 2 3 4 5\n");
  try {
    read_trajectory(in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
  }
  EXPECT_THROW(read_trajectory(std::filesystem::path("/nonexistent/traj.txt")), Error);
}
