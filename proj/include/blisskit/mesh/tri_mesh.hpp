#pragma once

#include <array>
#include <string>
#include <vector>

#include "blisskit/core/types.hpp"

namespace blisskit::mesh {

inline constexpr double kMinFaceArea = 1e-12;

// Indexed triangle surface. Topology is fixed at construction; every face is
// checked for index range, non-degeneracy and consistent orientation.
class TriMesh {
 public:
  TriMesh() = default;
  TriMesh(Vertices vertices, Faces faces);

  const Vertices& vertices() const { return vertices_; }
  const Faces& faces() const { return faces_; }
  int num_vertices() const { return static_cast<int>(vertices_.rows()); }
  int num_faces() const { return static_cast<int>(faces_.rows()); }

  // Same topology, new positions. Throws GeometryError if a face degenerates.
  TriMesh with_vertices(Vertices vertices) const;

  bool same_topology(const TriMesh& other) const;

  // Unique undirected edges (i < j), sorted.
  std::vector<std::array<int, 2>> edges() const;

 private:
  Vertices vertices_;
  Faces faces_;
};

// Per-face unit normals for arbitrary positions on a fixed face list.
Vertices face_normals(const Vertices& v, const Faces& f);
VectorX face_areas(const Vertices& v, const Faces& f);
// Area-weighted vertex normals, unit length.
Vertices vertex_normals(const Vertices& v, const Faces& f);
// Barycentric lumped vertex areas (one third of each incident face).
VectorX lumped_vertex_areas(const Vertices& v, const Faces& f);
Vertices face_centroids(const Vertices& v, const Faces& f);

// Number of connected components of the vertex graph (isolated vertices count).
int connected_components(int num_vertices, const Faces& f);

// Sorted unique undirected edges of a face list.
std::vector<std::array<int, 2>> unique_edges(const Faces& f);

// Index of the first face with area <= kMinFaceArea, or -1.
int find_degenerate_face(const Vertices& v, const Faces& f);

}  // namespace blisskit::mesh
