#pragma once

// Zero-level-set extraction from a TSDF volume and PLY export.

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "arthromap/mc_tables.hpp"
#include "arthromap/tsdf.hpp"

namespace arthromap {

using Vec3f = Eigen::Vector3f;
using Rgb = std::array<float, 3>;

/// Display color of a class id: other cyan, cartilage green, meniscus red,
/// ACL blue.
inline Rgb palette(int label) {
  switch (label) {
    case 0: return {0.0f, 1.0f, 1.0f};
    case 1: return {0.0f, 1.0f, 0.0f};
    case 2: return {1.0f, 0.0f, 0.0f};
    case 3: return {0.0f, 0.0f, 1.0f};
    default: throw Error(ErrorCode::kUnknownLabel, "palette: unknown label id " + std::to_string(label));
  }
}

inline Rgb palette(Label label) { return palette(static_cast<int>(label)); }

struct Mesh {
  std::vector<Vec3f> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  std::vector<Rgb> colors;
  std::vector<std::uint8_t> labels;

  bool empty() const { return triangles.empty(); }

  void validate() const {
    if (colors.size() != vertices.size() || labels.size() != vertices.size()) {
      throw Error(ErrorCode::kLengthMismatch, "mesh: per-vertex attribute count differs from vertex count");
    }
    for (const auto& v : vertices) {
      if (!v.allFinite()) throw Error(ErrorCode::kDomain, "mesh: non-finite vertex");
    }
    for (const auto& t : triangles) {
      for (auto i : t) {
        if (i >= vertices.size()) throw Error(ErrorCode::kDomain, "mesh: triangle index out of range");
      }
    }
    for (auto l : labels) {
      if (l >= kLabelCount) throw Error(ErrorCode::kUnknownLabel, "mesh: unknown vertex label");
    }
  }

  bool operator==(const Mesh&) const = default;
};

/// Marching cubes over cells whose eight corners are all observed. Vertices
/// are shared between cells through their lattice edge and numbered in
/// order of first use in an x-fastest cell scan. Triangles wind
/// counter-clockwise seen from the positive (outside) side.
inline Mesh marching_cubes(const TsdfVolume& vol, double iso = 0.0) {
  Mesh mesh;
  const Index3 n = vol.dims();
  if (n[0] < 2 || n[1] < 2 || n[2] < 2) return mesh;
  std::unordered_map<std::uint64_t, std::uint32_t> edge_vertex;

  auto vertex_on_edge = [&](const Index3& a, const Index3& b) -> std::uint32_t {
    int axis = 0;
    while (a[axis] == b[axis]) ++axis;
    const Index3& lo = a[axis] < b[axis] ? a : b;
    const std::uint64_t key = static_cast<std::uint64_t>(vol.index(lo[0], lo[1], lo[2])) * 3 + axis;
    auto [it, inserted] = edge_vertex.try_emplace(key, static_cast<std::uint32_t>(mesh.vertices.size()));
    if (!inserted) return it->second;
    const double va = vol.sdf(a[0], a[1], a[2]), vb = vol.sdf(b[0], b[1], b[2]);
    const double t = va == vb ? 0.5 : (iso - va) / (vb - va);
    const Vec3 pa = vol.voxel_center(a[0], a[1], a[2]), pb = vol.voxel_center(b[0], b[1], b[2]);
    const Vec3 p = pa + t * (pb - pa);
    mesh.vertices.push_back(p.cast<float>());
    Index3 nearest = t < 0.5 ? a : b;
    const Label label = majority_label(vol.label_counts(nearest[0], nearest[1], nearest[2]));
    mesh.labels.push_back(static_cast<std::uint8_t>(label));
    mesh.colors.push_back(palette(label));
    return it->second;
  };

  for (int k = 0; k + 1 < n[2]; ++k) {
    for (int j = 0; j + 1 < n[1]; ++j) {
      for (int i = 0; i + 1 < n[0]; ++i) {
        std::array<Index3, 8> corner;
        int cube = 0;
        bool observed = true;
        for (int c = 0; c < 8; ++c) {
          const auto& o = detail::kMcCornerOffsets[c];
          corner[c] = {i + o[0], j + o[1], k + o[2]};
          if (!vol.observed(corner[c][0], corner[c][1], corner[c][2])) {
            observed = false;
            break;
          }
          if (vol.sdf(corner[c][0], corner[c][1], corner[c][2]) < iso) cube |= 1 << c;
        }
        if (!observed || cube == 0 || cube == 255) continue;
        const int* tris = detail::kMcTriangles[cube];
        for (int t = 0; tris[t] >= 0; t += 3) {
          std::array<std::uint32_t, 3> tri;
          for (int e = 0; e < 3; ++e) {
            const auto& ec = detail::kMcEdgeCorners[tris[t + e]];
            tri[e] = vertex_on_edge(corner[ec[0]], corner[ec[1]]);
          }
          mesh.triangles.push_back({tri[0], tri[2], tri[1]});
        }
      }
    }
  }
  return mesh;
}

// ---------------------------------------------------------------------------
// PLY

enum class PlyFormat { kAscii, kBinary };

namespace detail {

inline std::uint8_t to_byte(float c) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0f, 1.0f) * 255.0f));
}

inline void append_float(std::string& out, float v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

}  // namespace detail

inline std::string encode_ply(const Mesh& mesh, PlyFormat format) {
  mesh.validate();
  std::string out;
  out += "ply\n";
  out += format == PlyFormat::kBinary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n";
  out += "element vertex " + std::to_string(mesh.vertices.size()) + "\n";
  out += "property float x\nproperty float y\nproperty float z\n";
  out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out += "property uchar label\n";
  out += "element face " + std::to_string(mesh.triangles.size()) + "\n";
  out += "property list uchar uint vertex_indices\n";
  out += "end_header\n";
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const auto& v = mesh.vertices[i];
    const std::array<std::uint8_t, 4> bytes{detail::to_byte(mesh.colors[i][0]), detail::to_byte(mesh.colors[i][1]),
                                            detail::to_byte(mesh.colors[i][2]), mesh.labels[i]};
    if (format == PlyFormat::kBinary) {
      for (int a = 0; a < 3; ++a) detail::put_f32(out, v[a]);
      for (auto b : bytes) out.push_back(static_cast<char>(b));
    } else {
      for (int a = 0; a < 3; ++a) {
        detail::append_float(out, v[a]);
        out.push_back(' ');
      }
      out += std::to_string(bytes[0]) + ' ' + std::to_string(bytes[1]) + ' ' + std::to_string(bytes[2]) + ' ' +
             std::to_string(bytes[3]) + '\n';
    }
  }
  for (const auto& t : mesh.triangles) {
    if (format == PlyFormat::kBinary) {
      out.push_back(3);
      for (auto i : t) detail::put_u32(out, i);
    } else {
      out += "3 " + std::to_string(t[0]) + ' ' + std::to_string(t[1]) + ' ' + std::to_string(t[2]) + '\n';
    }
  }
  return out;
}

inline void export_ply(const Mesh& mesh, const std::filesystem::path& path, PlyFormat format = PlyFormat::kBinary) {
  detail::write_all(path, encode_ply(mesh, format));
}

namespace detail {

enum class PlyType { kInt8, kUint8, kInt16, kUint16, kInt32, kUint32, kFloat32, kFloat64 };

inline PlyType parse_ply_type(const std::string& s) {
  if (s == "char" || s == "int8") return PlyType::kInt8;
  if (s == "uchar" || s == "uint8") return PlyType::kUint8;
  if (s == "short" || s == "int16") return PlyType::kInt16;
  if (s == "ushort" || s == "uint16") return PlyType::kUint16;
  if (s == "int" || s == "int32") return PlyType::kInt32;
  if (s == "uint" || s == "uint32") return PlyType::kUint32;
  if (s == "float" || s == "float32") return PlyType::kFloat32;
  if (s == "double" || s == "float64") return PlyType::kFloat64;
  throw Error(ErrorCode::kParse, "ply: unknown property type '" + s + "'");
}

inline std::size_t ply_type_size(PlyType t) {
  switch (t) {
    case PlyType::kInt8:
    case PlyType::kUint8: return 1;
    case PlyType::kInt16:
    case PlyType::kUint16: return 2;
    case PlyType::kInt32:
    case PlyType::kUint32:
    case PlyType::kFloat32: return 4;
    case PlyType::kFloat64: return 8;
  }
  return 0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::kFloat32;
  bool is_list = false;
  PlyType count_type = PlyType::kUint8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

// Sequential reader over the body of a PLY file in either encoding.
class PlyCursor {
 public:
  PlyCursor(const std::string& bytes, std::size_t pos, bool binary) : bytes_(bytes), pos_(pos), binary_(binary) {}

  double read(PlyType t) {
    if (!binary_) return read_ascii();
    const std::size_t size = ply_type_size(t);
    if (pos_ + size > bytes_.size()) throw Error(ErrorCode::kParse, "ply: truncated body");
    unsigned char b[8];
    std::memcpy(b, bytes_.data() + pos_, size);
    pos_ += size;
    switch (t) {
      case PlyType::kInt8: return static_cast<std::int8_t>(b[0]);
      case PlyType::kUint8: return b[0];
      case PlyType::kInt16: return static_cast<std::int16_t>(b[0] | b[1] << 8);
      case PlyType::kUint16: return static_cast<std::uint16_t>(b[0] | b[1] << 8);
      case PlyType::kInt32: return static_cast<std::int32_t>(get_u32(b));
      case PlyType::kUint32: return get_u32(b);
      case PlyType::kFloat32: return get_f32(b);
      case PlyType::kFloat64: {
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = v << 8 | b[i];
        return std::bit_cast<double>(v);
      }
    }
    return 0.0;
  }

 private:
  double read_ascii() {
    while (pos_ < bytes_.size() && std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
    double v = 0.0;
    auto res = std::from_chars(bytes_.data() + pos_, bytes_.data() + bytes_.size(), v);
    if (res.ec != std::errc()) throw Error(ErrorCode::kParse, "ply: bad or missing number");
    pos_ = static_cast<std::size_t>(res.ptr - bytes_.data());
    return v;
  }

  const std::string& bytes_;
  std::size_t pos_;
  bool binary_;
};

}  // namespace detail

/// Reads vertex positions, colors, optional labels and triangular faces.
/// Vertices without a label property get label 0.
inline Mesh decode_ply(const std::string& bytes) {
  const std::size_t end = bytes.find("end_header\n");
  if (bytes.compare(0, 4, "ply\n") != 0 || end == std::string::npos) throw Error(ErrorCode::kParse, "ply: bad header");
  std::istringstream header(bytes.substr(0, end));
  std::vector<detail::PlyElement> elements;
  bool binary = false;
  std::string line;
  while (std::getline(header, line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "binary_little_endian") binary = true;
      else if (fmt != "ascii") throw Error(ErrorCode::kParse, "ply: unsupported format " + fmt);
    } else if (word == "element") {
      detail::PlyElement e;
      if (!(ls >> e.name >> e.count)) throw Error(ErrorCode::kParse, "ply: bad element line");
      elements.push_back(e);
    } else if (word == "property") {
      if (elements.empty()) throw Error(ErrorCode::kParse, "ply: property before element");
      detail::PlyProperty p;
      std::string type;
      ls >> type;
      if (type == "list") {
        std::string count_type, item_type;
        ls >> count_type >> item_type;
        p.is_list = true;
        p.count_type = detail::parse_ply_type(count_type);
        p.type = detail::parse_ply_type(item_type);
      } else {
        p.type = detail::parse_ply_type(type);
      }
      if (!(ls >> p.name)) throw Error(ErrorCode::kParse, "ply: bad property line");
      elements.back().properties.push_back(p);
    }
  }

  for (const auto& e : elements) {
    if (e.name != "vertex") continue;
    for (const char* axis : {"x", "y", "z"}) {
      const bool found = std::any_of(e.properties.begin(), e.properties.end(), [&](const auto& p) { return p.name == axis; });
      if (!found) throw Error(ErrorCode::kParse, std::string("ply: vertex element lacks property ") + axis);
    }
  }

  Mesh mesh;
  detail::PlyCursor cur(bytes, end + 11, binary);
  for (const auto& e : elements) {
    for (std::size_t r = 0; r < e.count; ++r) {
      if (e.name == "vertex") {
        Vec3f v = Vec3f::Zero();
        Rgb c{1.0f, 1.0f, 1.0f};
        std::uint8_t label = 0;
        for (const auto& p : e.properties) {
          if (p.is_list) throw Error(ErrorCode::kParse, "ply: list property on vertex");
          const double x = cur.read(p.type);
          if (p.name == "x") v.x() = static_cast<float>(x);
          else if (p.name == "y") v.y() = static_cast<float>(x);
          else if (p.name == "z") v.z() = static_cast<float>(x);
          else if (p.name == "red") c[0] = static_cast<float>(x / 255.0);
          else if (p.name == "green") c[1] = static_cast<float>(x / 255.0);
          else if (p.name == "blue") c[2] = static_cast<float>(x / 255.0);
          else if (p.name == "label") label = static_cast<std::uint8_t>(x);
        }
        mesh.vertices.push_back(v);
        mesh.colors.push_back(c);
        mesh.labels.push_back(label);
      } else {
        for (const auto& p : e.properties) {
          if (!p.is_list) {
            cur.read(p.type);
            continue;
          }
          const auto count = static_cast<std::size_t>(cur.read(p.count_type));
          std::vector<std::uint32_t> idx(count);
          for (auto& i : idx) i = static_cast<std::uint32_t>(cur.read(p.type));
          if (e.name == "face" && p.name == "vertex_indices") {
            if (count != 3) throw Error(ErrorCode::kParse, "ply: only triangular faces are supported");
            mesh.triangles.push_back({idx[0], idx[1], idx[2]});
          }
        }
      }
    }
  }
  mesh.validate();
  return mesh;
}

inline Mesh read_ply(const std::filesystem::path& path) { return decode_ply(detail::read_all(path)); }

}  // namespace arthromap
