#include <cmath>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "arthromap/mesh.hpp"
#include "support/oracles.hpp"

using namespace arthromap;

namespace {

// Analytic volume: sdf = clamp(f(p) / trunc) with every voxel observed.
template <class Fn>
TsdfVolume analytic_volume(const Index3& dims, const Vec3& origin, double trunc, Fn&& f) {
  TsdfVolume v(dims, origin, 1.0, trunc);
  for (int k = 0; k < dims[2]; ++k) {
    for (int j = 0; j < dims[1]; ++j) {
      for (int i = 0; i < dims[0]; ++i) {
        const std::size_t idx = v.index(i, j, k);
        v.sdf_data()[idx] = static_cast<float>(std::clamp(f(v.voxel_center(i, j, k)) / trunc, -1.0, 1.0));
        v.weight_data()[idx] = 1.0f;
      }
    }
  }
  return v;
}

TsdfVolume sphere_volume(double r = 10.0) {
  return analytic_volume({32, 32, 32}, Vec3::Constant(-15.5), 4.0, [r](const Vec3& p) { return p.norm() - r; });
}

struct EdgeStats {
  std::size_t edges = 0;
  std::size_t non_manifold = 0;  // edges not shared by exactly two triangles
  std::size_t inconsistent = 0;  // edges traversed twice in the same direction
};

EdgeStats edge_stats(const Mesh& m) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> directed;
  for (const auto& t : m.triangles) {
    for (int e = 0; e < 3; ++e) ++directed[{t[e], t[(e + 1) % 3]}];
  }
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> undirected;
  EdgeStats s;
  for (const auto& [e, n] : directed) {
    undirected[{std::min(e.first, e.second), std::max(e.first, e.second)}] += n;
    if (n > 1) ++s.inconsistent;
  }
  s.edges = undirected.size();
  for (const auto& [e, n] : undirected) s.non_manifold += n != 2;
  return s;
}

Vec3 normal_of(const Mesh& m, const std::array<std::uint32_t, 3>& t) {
  const Vec3 a = m.vertices[t[0]].cast<double>(), b = m.vertices[t[1]].cast<double>(), c = m.vertices[t[2]].cast<double>();
  return (b - a).cross(c - a);
}

Vec3 centroid_of(const Mesh& m, const std::array<std::uint32_t, 3>& t) {
  return (m.vertices[t[0]] + m.vertices[t[1]] + m.vertices[t[2]]).cast<double>() / 3.0;
}

}  // namespace

TEST(Palette, Colors) {
  EXPECT_EQ(palette(1), (Rgb{0, 1, 0}));
  EXPECT_EQ(palette(Label::kAcl), (Rgb{0, 0, 1}));
  EXPECT_EQ(palette(Label::kMeniscus), (Rgb{1, 0, 0}));
  try {
    palette(7);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownLabel);
  }
}

TEST(MarchingCubes, SphereIsClosedAndAccurate) {
  const Mesh m = marching_cubes(sphere_volume());
  ASSERT_FALSE(m.empty());
  m.validate();
  EXPECT_LT(testing_support::rms_radial_error(m.vertices, Vec3::Zero(), 10.0), 0.05);
  for (const auto& v : m.vertices) EXPECT_NEAR(v.cast<double>().norm(), 10.0, 0.1);
  const EdgeStats s = edge_stats(m);
  EXPECT_EQ(s.non_manifold, 0u);
  EXPECT_EQ(s.inconsistent, 0u);
  const long chi = static_cast<long>(m.vertices.size()) - static_cast<long>(s.edges) + static_cast<long>(m.triangles.size());
  EXPECT_EQ(chi, 2);
}

TEST(MarchingCubes, OutwardWinding) {
  const Mesh m = marching_cubes(sphere_volume());
  for (const auto& t : m.triangles) EXPECT_GT(normal_of(m, t).dot(centroid_of(m, t)), 0.0);
}

TEST(MarchingCubes, VerticesOnLatticeEdges) {
  const TsdfVolume v = sphere_volume(7.3);
  const Mesh m = marching_cubes(v);
  for (const auto& p : m.vertices) {
    const Vec3 g = (p.cast<double>() - v.origin()) / v.voxel_size();
    int on_lattice = 0;
    for (int a = 0; a < 3; ++a) on_lattice += std::abs(g[a] - std::round(g[a])) < 1e-4;
    EXPECT_GE(on_lattice, 2);
    const SdfQuery q = query_sdf(v, p.cast<double>());
    ASSERT_TRUE(q.observed);
    EXPECT_LT(std::abs(q.value), 1e-5);
  }
}

TEST(MarchingCubes, Plane) {
  const TsdfVolume v = analytic_volume({8, 9, 10}, Vec3::Zero(), 3.0, [](const Vec3& p) { return 5.3 - p.z(); });
  const Mesh m = marching_cubes(v);
  EXPECT_EQ(m.triangles.size(), 2u * 7 * 8);
  for (const auto& p : m.vertices) EXPECT_NEAR(p.z(), 5.3, 1e-5);
  for (const auto& t : m.triangles) EXPECT_LT(normal_of(m, t).z(), 0.0);  // towards the positive side
}

TEST(MarchingCubes, NoSurface) {
  EXPECT_TRUE(marching_cubes(analytic_volume({6, 6, 6}, Vec3::Zero(), 4.0, [](const Vec3&) { return 3.0; })).empty());
  EXPECT_TRUE(marching_cubes(TsdfVolume({6, 6, 6}, Vec3::Zero(), 1.0, 4.0)).empty());
  EXPECT_TRUE(marching_cubes(TsdfVolume({1, 6, 6}, Vec3::Zero(), 1.0, 4.0)).empty());
}

TEST(MarchingCubes, UnobservedCellsSkipped) {
  TsdfVolume v = sphere_volume();
  const std::size_t full = marching_cubes(v).triangles.size();
  for (int k = 0; k < 32; ++k) {
    for (int j = 0; j < 32; ++j) {
      for (int i = 16; i < 32; ++i) v.weight_data()[v.index(i, j, k)] = 0.0f;
    }
  }
  const Mesh half = marching_cubes(v);
  EXPECT_LT(half.triangles.size(), full);
  for (const auto& p : half.vertices) EXPECT_LE(p.x(), -0.5f + 1e-4f);  // last observed column is i = 15
}

TEST(MarchingCubes, UniformLabelColors) {
  TsdfVolume v = sphere_volume();
  for (auto& c : v.label_data()) c[static_cast<int>(Label::kMeniscus)] = 3;
  const Mesh m = marching_cubes(v);
  for (std::size_t i = 0; i < m.vertices.size(); ++i) {
    EXPECT_EQ(m.labels[i], static_cast<std::uint8_t>(Label::kMeniscus));
    EXPECT_EQ(m.colors[i], palette(Label::kMeniscus));
  }
}

TEST(MarchingCubes, LabelsFollowVoxels) {
  TsdfVolume v = sphere_volume();
  for (int k = 0; k < 32; ++k) {
    for (int j = 0; j < 32; ++j) {
      for (int i = 0; i < 32; ++i) {
        const Label l = v.voxel_center(i, j, k).x() < 0 ? Label::kCartilage : Label::kAcl;
        v.label_data()[v.index(i, j, k)][static_cast<int>(l)] = 2;
      }
    }
  }
  const Mesh m = marching_cubes(v);
  for (std::size_t i = 0; i < m.vertices.size(); ++i) {
    if (std::abs(m.vertices[i].x()) < 1.0f) continue;
    EXPECT_EQ(m.labels[i], static_cast<std::uint8_t>(m.vertices[i].x() < 0 ? Label::kCartilage : Label::kAcl));
  }
}

TEST(MarchingCubes, Deterministic) {
  const TsdfVolume v = sphere_volume(9.1);
  EXPECT_EQ(encode_ply(marching_cubes(v), PlyFormat::kBinary), encode_ply(marching_cubes(v), PlyFormat::kBinary));
}

TEST(MeshValidate, Errors) {
  Mesh m;
  m.vertices.push_back(Vec3f(0, 0, 0));
  EXPECT_THROW(m.validate(), Error);
  m.colors.push_back(palette(0));
  m.labels.push_back(0);
  EXPECT_NO_THROW(m.validate());
  m.triangles.push_back({0, 0, 1});
  EXPECT_THROW(m.validate(), Error);
  m.triangles.clear();
  m.labels[0] = 4;
  EXPECT_THROW(m.validate(), Error);
}

TEST(Ply, EmptyMesh) {
  for (PlyFormat f : {PlyFormat::kAscii, PlyFormat::kBinary}) {
    const std::string bytes = encode_ply(Mesh{}, f);
    EXPECT_NE(bytes.find("element vertex 0\n"), std::string::npos);
    EXPECT_EQ(decode_ply(bytes), Mesh{});
  }
}

TEST(Ply, HeaderLayout) {
  const std::string bytes = encode_ply(marching_cubes(sphere_volume()), PlyFormat::kBinary);
  EXPECT_EQ(bytes.rfind("ply\nformat binary_little_endian 1.0\n", 0), 0u);
  EXPECT_NE(bytes.find("property uchar label\n"), std::string::npos);
  EXPECT_NE(bytes.find("property list uchar uint vertex_indices\n"), std::string::npos);
}

TEST(Ply, RoundTrip) {
  TsdfVolume v = sphere_volume(8.7);
  for (std::size_t i = 0; i < v.voxel_count(); ++i) v.label_data()[i][i % 4] = 1;
  const Mesh m = marching_cubes(v);
  ASSERT_FALSE(m.empty());
  EXPECT_EQ(decode_ply(encode_ply(m, PlyFormat::kBinary)), m);
  const Mesh ascii = decode_ply(encode_ply(m, PlyFormat::kAscii));
  ASSERT_EQ(ascii.vertices.size(), m.vertices.size());
  for (std::size_t i = 0; i < m.vertices.size(); ++i) EXPECT_LT((ascii.vertices[i] - m.vertices[i]).norm(), 1e-6f);
  EXPECT_EQ(ascii.triangles, m.triangles);
  EXPECT_EQ(ascii.labels, m.labels);
  EXPECT_EQ(ascii.colors, m.colors);

  testing_support::TempDir dir("ply");
  export_ply(m, dir / "m.ply");
  EXPECT_EQ(read_ply(dir / "m.ply"), m);
}

TEST(Ply, Malformed) {
  for (const std::string& bad : {std::string("plx\n"), std::string("ply\nformat ascii 1.0\nelement vertex 2\nend_header\n1 2\n"),
                                 std::string("ply\nformat binary_big_endian 1.0\nend_header\n")}) {
    try {
      decode_ply(bad);
      FAIL() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kParse);
    }
  }
}
