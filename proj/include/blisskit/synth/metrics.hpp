#pragma once

#include <cstdint>
#include <vector>

#include "blisskit/core/types.hpp"
#include "blisskit/mesh/tri_mesh.hpp"
#include "blisskit/shape/shape_space.hpp"

namespace blisskit::synth {

// Closest point on triangle (a, b, c) to p; barycentrics sum to one.
struct TrianglePoint {
  Vec3 point;
  Vec3 bary;
};
TrianglePoint closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

struct SurfacePoint {
  int face = -1;
  Vec3 point;
  Vec3 bary;
  double d2 = 0.0;
};

// AABB tree over triangles for closest-point queries. Equidistant faces
// resolve to the lowest face index.
class SurfaceBvh {
 public:
  SurfaceBvh(Vertices v, Faces f);
  SurfacePoint closest(const Vec3& q) const;

 private:
  struct Node {
    Eigen::AlignedBox3d box;
    int left = -1, right = -1;  // children, or -1 for leaves
    int begin = 0, end = 0;     // leaf range into order_
  };
  int build(int begin, int end, const Vertices& centroids);
  void consider(int face, const Vec3& q, SurfacePoint& best) const;

  Vertices v_;
  Faces f_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

// Mean distance between corresponding vertices. Throws DimensionError on a
// vertex-count mismatch (TriMesh overload: GeometryError on differing faces).
VectorX v2v_per_vertex(const Vertices& pred, const Vertices& gt);
double v2v(const Vertices& pred, const Vertices& gt);
double v2v(const mesh::TriMesh& pred, const mesh::TriMesh& gt);

// |n_gt(q) . (v - q)| with q the closest point of gt's surface and n_gt the
// interpolated vertex normal there; no topology requirement.
VectorX v2p_per_vertex(const Vertices& pred, const Vertices& gt_v, const Faces& gt_f);
double v2p(const Vertices& pred, const Vertices& gt_v, const Faces& gt_f);
double v2p(const mesh::TriMesh& pred, const mesh::TriMesh& gt);

// Entry (a, b), a != b: mean over samples of a of the nearest v2v among the
// samples of b. Diagonal: mean nearest-neighbour v2v within a space,
// excluding the sample itself. Meters.
MatrixX diversity_from_samples(const std::vector<std::vector<Vertices>>& samples);
// Farthest-samples each space (one generator seeded once, spaces in order).
MatrixX diversity_table(const std::vector<shape::ShapeSpace>& spaces, int samples_per_space, std::uint64_t seed);

struct Histogram {
  std::vector<double> edges;  // bins + 1
  std::vector<int> counts;
};
// Equal-width bins on [0, max]; values above max land in the last bin.
Histogram histogram(const VectorX& values, int bins, double max);

}  // namespace blisskit::synth
