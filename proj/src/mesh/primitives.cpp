#include "blisskit/mesh/primitives.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <vector>

namespace blisskit::mesh {

namespace {

struct EdgeKey {
  int a, b;
  bool operator<(const EdgeKey& o) const { return a != o.a ? a < o.a : b < o.b; }
};

EdgeKey key(int a, int b) { return a < b ? EdgeKey{a, b} : EdgeKey{b, a}; }

// Splits every triangle into four; new edge vertices come from `edge_point`.
template <typename EdgePoint>
std::pair<std::vector<Vec3>, std::vector<std::array<int, 3>>> split_faces(
    const std::vector<Vec3>& verts, const std::vector<std::array<int, 3>>& faces, EdgePoint edge_point) {
  std::vector<Vec3> out_v = verts;
  std::map<EdgeKey, int> mid;
  auto midpoint = [&](int a, int b) {
    const auto k = key(a, b);
    if (auto it = mid.find(k); it != mid.end()) return it->second;
    out_v.push_back(edge_point(a, b));
    const int idx = static_cast<int>(out_v.size()) - 1;
    mid.emplace(k, idx);
    return idx;
  };
  std::vector<std::array<int, 3>> out_f;
  out_f.reserve(faces.size() * 4);
  for (const auto& t : faces) {
    const int ab = midpoint(t[0], t[1]);
    const int bc = midpoint(t[1], t[2]);
    const int ca = midpoint(t[2], t[0]);
    out_f.push_back({t[0], ab, ca});
    out_f.push_back({t[1], bc, ab});
    out_f.push_back({t[2], ca, bc});
    out_f.push_back({ab, bc, ca});
  }
  return {std::move(out_v), std::move(out_f)};
}

TriMesh to_mesh(const std::vector<Vec3>& verts, const std::vector<std::array<int, 3>>& faces) {
  Vertices v(static_cast<long>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) v.row(static_cast<long>(i)) = verts[i].transpose();
  Faces f(static_cast<long>(faces.size()), 3);
  for (std::size_t k = 0; k < faces.size(); ++k)
    f.row(static_cast<long>(k)) << faces[k][0], faces[k][1], faces[k][2];
  return TriMesh(std::move(v), std::move(f));
}

}  // namespace

TriMesh make_icosphere(int subdivisions, double radius) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                         {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<std::array<int, 3>> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                       {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                       {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                       {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    auto [nv, nf] = split_faces(v, f, [&](int a, int b) { return Vec3((v[a] + v[b]).normalized()); });
    v = std::move(nv);
    f = std::move(nf);
  }
  for (auto& p : v) p *= radius;
  return to_mesh(v, f);
}

TriMesh make_grid_patch(int nx, int ny, double width, double height) {
  if (nx < 1 || ny < 1) throw DimensionError("make_grid_patch: need at least one cell per axis");
  std::vector<Vec3> v;
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i) v.emplace_back(width * i / nx, height * j / ny, 0.0);
  std::vector<std::array<int, 3>> f;
  auto id = [nx](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      f.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      f.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  return to_mesh(v, f);
}

LoopStep loop_subdivide_with_stencil(const TriMesh& mesh) {
  const Vertices& V = mesh.vertices();
  const Faces& F = mesh.faces();
  const int n = mesh.num_vertices();

  // Opposite vertices per undirected edge and vertex neighbourhoods.
  std::map<EdgeKey, std::vector<int>> opposite;
  for (int k = 0; k < F.rows(); ++k)
    for (int c = 0; c < 3; ++c) opposite[key(F(k, c), F(k, (c + 1) % 3))].push_back(F(k, (c + 2) % 3));

  std::vector<std::vector<int>> ring(static_cast<std::size_t>(n));
  std::vector<std::vector<int>> boundary_nbrs(static_cast<std::size_t>(n));
  for (const auto& [e, opp] : opposite) {
    ring[e.a].push_back(e.b);
    ring[e.b].push_back(e.a);
    if (opp.size() == 1) {
      boundary_nbrs[e.a].push_back(e.b);
      boundary_nbrs[e.b].push_back(e.a);
    }
  }

  std::vector<Eigen::Triplet<double>> trip;
  for (int i = 0; i < n; ++i) {
    if (!boundary_nbrs[i].empty()) {
      if (boundary_nbrs[i].size() == 2) {
        trip.emplace_back(i, i, 0.75);
        trip.emplace_back(i, boundary_nbrs[i][0], 0.125);
        trip.emplace_back(i, boundary_nbrs[i][1], 0.125);
      } else {
        trip.emplace_back(i, i, 1.0);
      }
      continue;
    }
    const double k = static_cast<double>(ring[i].size());
    const double c = 3.0 / 8.0 + 0.25 * std::cos(2.0 * std::numbers::pi / k);
    const double beta = (5.0 / 8.0 - c * c) / k;
    trip.emplace_back(i, i, 1.0 - k * beta);
    for (int j : ring[i]) trip.emplace_back(i, j, beta);
  }

  std::vector<Vec3> base(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) base[i] = V.row(i).transpose();
  std::vector<std::array<int, 3>> faces(static_cast<std::size_t>(F.rows()));
  for (int k = 0; k < F.rows(); ++k) faces[k] = {F(k, 0), F(k, 1), F(k, 2)};
  int next = n;
  auto [nv, nf] = split_faces(base, faces, [&](int a, int b) -> Vec3 {
    const int row = next++;
    const auto& opp = opposite.at(key(a, b));
    if (opp.size() != 2) {
      trip.emplace_back(row, a, 0.5);
      trip.emplace_back(row, b, 0.5);
      return Vec3::Zero();
    }
    trip.emplace_back(row, a, 0.375);
    trip.emplace_back(row, b, 0.375);
    trip.emplace_back(row, opp[0], 0.125);
    trip.emplace_back(row, opp[1], 0.125);
    return Vec3::Zero();
  });

  LoopStep out;
  out.stencil.resize(static_cast<long>(nv.size()), n);
  out.stencil.setFromTriplets(trip.begin(), trip.end());
  const Vertices pos = out.stencil * V;
  Faces f(static_cast<long>(nf.size()), 3);
  for (std::size_t k = 0; k < nf.size(); ++k) f.row(static_cast<long>(k)) << nf[k][0], nf[k][1], nf[k][2];
  out.mesh = TriMesh(pos, std::move(f));
  return out;
}

TriMesh loop_subdivide(const TriMesh& mesh) { return loop_subdivide_with_stencil(mesh).mesh; }

}  // namespace blisskit::mesh
