#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "blisskit/rig/rig.hpp"

namespace blisskit::fixtures {

// Closed tube along +y (capped with pole vertices), radius r, height h.
inline mesh::TriMesh make_tube(int rings, int segments, double r, double h) {
  std::vector<Vec3> v;
  v.emplace_back(0.0, 0.0, 0.0);
  for (int i = 0; i < rings; ++i) {
    const double y = h * (i + 0.5) / rings;
    for (int s = 0; s < segments; ++s) {
      const double a = 2.0 * std::numbers::pi * s / segments;
      v.emplace_back(r * std::cos(a), y, r * std::sin(a));
    }
  }
  v.emplace_back(0.0, h, 0.0);
  const int top = static_cast<int>(v.size()) - 1;
  auto id = [segments](int ring, int s) { return 1 + ring * segments + (s % segments); };
  std::vector<std::array<int, 3>> f;
  for (int s = 0; s < segments; ++s) f.push_back({0, id(0, s), id(0, s + 1)});
  for (int i = 0; i + 1 < rings; ++i)
    for (int s = 0; s < segments; ++s) {
      f.push_back({id(i, s), id(i + 1, s), id(i + 1, s + 1)});
      f.push_back({id(i, s), id(i + 1, s + 1), id(i, s + 1)});
    }
  for (int s = 0; s < segments; ++s) f.push_back({top, id(rings - 1, s + 1), id(rings - 1, s)});
  Vertices vv(static_cast<long>(v.size()), 3);
  for (std::size_t i = 0; i < v.size(); ++i) vv.row(static_cast<long>(i)) = v[i].transpose();
  Faces ff(static_cast<long>(f.size()), 3);
  for (std::size_t i = 0; i < f.size(); ++i) ff.row(static_cast<long>(i)) << f[i][0], f[i][1], f[i][2];
  return mesh::TriMesh(vv, ff);
}

// Tube rig: root in the middle, one child chain upwards (two joints), one
// child downwards. Gaussian falloff weights along y, ring-average regressor.
inline rig::TemplateBundle make_tube_bundle(int rings = 12, int segments = 10, bool with_corrective = false,
                                            unsigned seed = 1) {
  mesh::TriMesh m = make_tube(rings, segments, 0.08, 1.0);
  const std::vector<int> parents = {-1, 0, 1, 0};
  const std::vector<double> heights = {0.5, 0.75, 0.92, 0.2};
  const int n = m.num_vertices(), k = 4;
  RowMatrixX w(n, k);
  for (int i = 0; i < n; ++i) {
    const double y = m.vertices()(i, 1);
    for (int j = 0; j < k; ++j) w(i, j) = std::exp(-std::pow(y - heights[j], 2) / (2.0 * 0.12 * 0.12));
    w.row(i) /= w.row(i).sum();
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> reg(k, n);
  std::vector<Eigen::Triplet<double>> trip;
  for (int j = 0; j < k; ++j) {
    std::vector<int> near;
    for (int i = 0; i < n; ++i)
      if (std::abs(m.vertices()(i, 1) - heights[j]) < 0.5 / rings + 1e-9) near.push_back(i);
    for (int i : near) trip.emplace_back(j, i, 1.0 / static_cast<double>(near.size()));
  }
  reg.setFromTriplets(trip.begin(), trip.end());
  MatrixX corr;
  if (with_corrective) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 0.002);
    corr.resize(3 * n, 3 * k);
    for (int i = 0; i < corr.size(); ++i) corr.data()[i] = g(rng);
  }
  return rig::TemplateBundle(m, parents, {"root", "upper", "top", "lower"}, w, reg, corr);
}

inline rig::Pose random_pose(int k, std::mt19937_64& rng, double scale = 0.4) {
  std::normal_distribution<double> g(0.0, scale);
  rig::Pose p = rig::Pose::identity(k);
  for (int i = 0; i < p.theta.size(); ++i) p.theta.data()[i] = g(rng);
  p.translation = Vec3(g(rng), g(rng), g(rng));
  return p;
}

}  // namespace blisskit::fixtures

namespace blisskit::fixtures {

// Area-weighted random points on a triangle mesh surface.
inline Points sample_surface(const Vertices& v, const Faces& f, int count, std::mt19937_64& rng) {
  const VectorX area = mesh::face_areas(v, f);
  std::vector<double> cdf(static_cast<std::size_t>(area.size()));
  double acc = 0.0;
  for (int i = 0; i < area.size(); ++i) cdf[i] = acc += area[i];
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Points p(count, 3);
  for (int s = 0; s < count; ++s) {
    const double r = u(rng) * acc;
    const int k = static_cast<int>(std::lower_bound(cdf.begin(), cdf.end(), r) - cdf.begin());
    double a = u(rng), b = u(rng);
    if (a + b > 1.0) {
      a = 1.0 - a;
      b = 1.0 - b;
    }
    p.row(s) = (1.0 - a - b) * v.row(f(k, 0)) + a * v.row(f(k, 1)) + b * v.row(f(k, 2));
  }
  return p;
}

// Smooth family of tube shapes: radius taper, bulge and length change.
inline std::vector<Vertices> tube_shapes(const mesh::TriMesh& tube, int count, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<Vertices> out;
  for (int s = 0; s < count; ++s) {
    const double taper = 0.15 * g(rng), bulge = 0.2 * g(rng), len = 0.05 * g(rng), flat = 0.1 * g(rng);
    Vertices x = tube.vertices();
    for (int i = 0; i < x.rows(); ++i) {
      const double y = x(i, 1);
      const double radial = 1.0 + taper * (y - 0.5) + bulge * std::sin(std::numbers::pi * y);
      x(i, 0) *= radial * (1.0 + flat);
      x(i, 2) *= radial * (1.0 - flat);
      x(i, 1) = y * (1.0 + len);
    }
    out.push_back(x);
  }
  return out;
}

}  // namespace blisskit::fixtures
