#pragma once

#include <Eigen/Sparse>

#include "blisskit/mesh/tri_mesh.hpp"

namespace blisskit::mesh {

// Icosahedron refined `subdivisions` times (4x faces per level), projected to
// a sphere of the given radius. Level 2: 162 vertices, level 3: 642.
TriMesh make_icosphere(int subdivisions, double radius = 1.0);

// Flat rectangular patch in the z = 0 plane with (nx + 1) x (ny + 1) vertices,
// normals along +z.
TriMesh make_grid_patch(int nx, int ny, double width, double height);

// One Loop subdivision step of a closed or open triangle mesh.
TriMesh loop_subdivide(const TriMesh& mesh);

// Same step, also returning the (new N) x (old N) stencil so per-vertex
// attributes can be carried along: new = stencil * old. Rows sum to one.
struct LoopStep {
  TriMesh mesh;
  Eigen::SparseMatrix<double> stencil;
};
LoopStep loop_subdivide_with_stencil(const TriMesh& mesh);

}  // namespace blisskit::mesh
