#include "blisskit/mesh/tri_mesh.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_set>

namespace blisskit::mesh {

namespace {

inline Vec3 row3(const Vertices& v, int i) { return v.row(i).transpose(); }

Vec3 face_cross(const Vertices& v, const Faces& f, int k) {
  const Vec3 a = row3(v, f(k, 0));
  const Vec3 b = row3(v, f(k, 1));
  const Vec3 c = row3(v, f(k, 2));
  return (b - a).cross(c - a);
}

}  // namespace

int find_degenerate_face(const Vertices& v, const Faces& f) {
  for (int k = 0; k < f.rows(); ++k) {
    const double area = 0.5 * face_cross(v, f, k).norm();
    if (!(area > kMinFaceArea)) return k;
  }
  return -1;
}

TriMesh::TriMesh(Vertices vertices, Faces faces) : vertices_(std::move(vertices)), faces_(std::move(faces)) {
  const int n = num_vertices();
  if (!vertices_.allFinite()) throw GeometryError("mesh has non-finite vertex coordinates");
  for (int k = 0; k < faces_.rows(); ++k) {
    for (int c = 0; c < 3; ++c) {
      const int idx = faces_(k, c);
      if (idx < 0 || idx >= n)
        throw GeometryError("face " + std::to_string(k) + " references vertex " + std::to_string(idx) +
                            " outside [0, " + std::to_string(n) + ")");
    }
  }
  if (const int bad = find_degenerate_face(vertices_, faces_); bad >= 0)
    throw GeometryError("degenerate face " + std::to_string(bad) + " (area <= 1e-12 m^2)");

  // Each directed edge may appear at most once for a consistently oriented surface.
  std::unordered_set<std::uint64_t> directed;
  directed.reserve(static_cast<std::size_t>(faces_.rows()) * 3);
  for (int k = 0; k < faces_.rows(); ++k) {
    for (int c = 0; c < 3; ++c) {
      const auto a = static_cast<std::uint64_t>(faces_(k, c));
      const auto b = static_cast<std::uint64_t>(faces_(k, (c + 1) % 3));
      if (!directed.insert((a << 32) | b).second)
        throw GeometryError("inconsistent orientation: directed edge (" + std::to_string(a) + ", " +
                            std::to_string(b) + ") repeated at face " + std::to_string(k));
    }
  }
}

TriMesh TriMesh::with_vertices(Vertices vertices) const {
  if (vertices.rows() != vertices_.rows()) throw DimensionError("vertex count does not match topology");
  if (!vertices.allFinite()) throw GeometryError("mesh has non-finite vertex coordinates");
  if (const int bad = find_degenerate_face(vertices, faces_); bad >= 0)
    throw GeometryError("degenerate face " + std::to_string(bad) + " (area <= 1e-12 m^2)");
  TriMesh out;
  out.vertices_ = std::move(vertices);
  out.faces_ = faces_;
  return out;
}

bool TriMesh::same_topology(const TriMesh& other) const {
  return num_vertices() == other.num_vertices() && faces_.rows() == other.faces_.rows() &&
         faces_ == other.faces_;
}

std::vector<std::array<int, 2>> TriMesh::edges() const { return unique_edges(faces_); }

std::vector<std::array<int, 2>> unique_edges(const Faces& f) {
  std::vector<std::array<int, 2>> e;
  e.reserve(static_cast<std::size_t>(f.rows()) * 3);
  for (int k = 0; k < f.rows(); ++k)
    for (int c = 0; c < 3; ++c) {
      int a = f(k, c), b = f(k, (c + 1) % 3);
      if (a > b) std::swap(a, b);
      e.push_back({a, b});
    }
  std::sort(e.begin(), e.end());
  e.erase(std::unique(e.begin(), e.end()), e.end());
  return e;
}

Vertices face_normals(const Vertices& v, const Faces& f) {
  Vertices n(f.rows(), 3);
  for (int k = 0; k < f.rows(); ++k) {
    const Vec3 c = face_cross(v, f, k);
    const double len = c.norm();
    n.row(k) = len > 0.0 ? Vec3(c / len).transpose() : Vec3(Vec3::Zero()).transpose();
  }
  return n;
}

VectorX face_areas(const Vertices& v, const Faces& f) {
  VectorX a(f.rows());
  for (int k = 0; k < f.rows(); ++k) a[k] = 0.5 * face_cross(v, f, k).norm();
  return a;
}

Vertices vertex_normals(const Vertices& v, const Faces& f) {
  Vertices n = Vertices::Zero(v.rows(), 3);
  for (int k = 0; k < f.rows(); ++k) {
    const Vec3 c = face_cross(v, f, k);  // |c| = 2 * area
    for (int j = 0; j < 3; ++j) n.row(f(k, j)) += c.transpose();
  }
  for (int i = 0; i < n.rows(); ++i) {
    const double len = n.row(i).norm();
    if (len > 0.0) n.row(i) /= len;
  }
  return n;
}

VectorX lumped_vertex_areas(const Vertices& v, const Faces& f) {
  VectorX a = VectorX::Zero(v.rows());
  const VectorX fa = face_areas(v, f);
  for (int k = 0; k < f.rows(); ++k)
    for (int j = 0; j < 3; ++j) a[f(k, j)] += fa[k] / 3.0;
  return a;
}

Vertices face_centroids(const Vertices& v, const Faces& f) {
  Vertices c(f.rows(), 3);
  for (int k = 0; k < f.rows(); ++k) c.row(k) = (v.row(f(k, 0)) + v.row(f(k, 1)) + v.row(f(k, 2))) / 3.0;
  return c;
}

int connected_components(int num_vertices, const Faces& f) {
  std::vector<int> parent(static_cast<std::size_t>(num_vertices));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  int components = num_vertices;
  for (int k = 0; k < f.rows(); ++k)
    for (int c = 0; c < 3; ++c) {
      const int a = find(f(k, c)), b = find(f(k, (c + 1) % 3));
      if (a != b) {
        parent[a] = b;
        --components;
      }
    }
  return components;
}

}  // namespace blisskit::mesh
