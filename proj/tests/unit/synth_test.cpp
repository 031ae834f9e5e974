#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "blisskit/fit/fit_scan.hpp"
#include "blisskit/mesh/primitives.hpp"
#include "blisskit/synth/family.hpp"
#include "blisskit/synth/metrics.hpp"
#include "blisskit/synth/scan.hpp"

using namespace blisskit;
using namespace blisskit::synth;

namespace {

const SyntheticFamily& family() {
  static const SyntheticFamily fam = make_family(FamilyConfig{});
  return fam;
}

// 10 x 10 grid (200 faces) with random heights.
mesh::TriMesh bumpy_patch(std::mt19937_64& rng, double amplitude = 0.05) {
  const mesh::TriMesh flat = mesh::make_grid_patch(10, 10, 1.0, 1.0);
  std::uniform_real_distribution<double> u(-amplitude, amplitude);
  Vertices v = flat.vertices();
  for (int i = 0; i < v.rows(); ++i) v(i, 2) = u(rng);
  return flat.with_vertices(v);
}

double brute_v2p_point(const Vec3& p, const Vertices& v, const Faces& f, const Vertices& normals) {
  double best = INFINITY, out = 0.0;
  for (int k = 0; k < f.rows(); ++k) {
    const TrianglePoint t = closest_point_on_triangle(p, v.row(f(k, 0)).transpose(), v.row(f(k, 1)).transpose(),
                                                      v.row(f(k, 2)).transpose());
    const double d2 = (t.point - p).squaredNorm();
    if (d2 < best) {
      best = d2;
      Vec3 n = Vec3::Zero();
      for (int c = 0; c < 3; ++c) n += t.bary[c] * normals.row(f(k, c)).transpose();
      out = std::abs(n.normalized().dot(p - t.point));
    }
  }
  return out;
}

// Dense point-to-triangle distance, the oracle for scan placement.
double distance_to_mesh(const Vec3& p, const Vertices& v, const Faces& f) {
  double best = INFINITY;
  for (int k = 0; k < f.rows(); ++k) {
    const TrianglePoint t = closest_point_on_triangle(p, v.row(f(k, 0)).transpose(), v.row(f(k, 1)).transpose(),
                                                      v.row(f(k, 2)).transpose());
    best = std::min(best, (t.point - p).squaredNorm());
  }
  return std::sqrt(best);
}

}  // namespace

TEST(Humanoid, ValidConnectedTemplate) {
  const rig::TemplateBundle& b = family().bundle;
  EXPECT_EQ(b.num_joints(), 16);
  EXPECT_EQ(mesh::connected_components(b.num_vertices(), b.mesh().faces()), 1);
  EXPECT_GT(b.mesh().num_faces(), 1500);
  EXPECT_LT(b.mesh().num_faces(), 2500);
  // Closed surface: every edge shared by exactly two faces (V - E + F = 2).
  const auto e = b.mesh().edges();
  EXPECT_EQ(b.num_vertices() - static_cast<int>(e.size()) + b.mesh().num_faces(), 2);
}

TEST(Humanoid, CoarseVariantIsNearFiveHundredVertices) {
  HumanoidOptions o;
  o.ring_spacing = 0.3;
  const rig::TemplateBundle b = make_humanoid(o);
  EXPECT_LT(b.num_vertices(), 650);
}

TEST(Humanoid, JointsSitInsideTheBody) {
  const rig::TemplateBundle& b = family().bundle;
  const Vertices j = b.joints(b.mesh().vertices());
  // Symmetric pairs mirror in x.
  EXPECT_NEAR(j(4, 0), -j(7, 0), 1e-9);
  EXPECT_NEAR(j(10, 0), -j(13, 0), 1e-9);
  EXPECT_GT(j(3, 1), j(2, 1));
  EXPECT_GT(j(2, 1), j(0, 1));
  EXPECT_LT(j(12, 1), j(11, 1));
}

TEST(Family, ModesOrthonormal) {
  const MatrixX& m = family().modes;
  EXPECT_EQ(m.cols(), 15);
  EXPECT_LT((m.transpose() * m - MatrixX::Identity(15, 15)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Family, ThreeSigmaShapesDoNotFlipFaces) {
  const SyntheticFamily& fam = family();
  const VectorX rest = flatten(fam.bundle.mesh().vertices());
  for (int m = 0; m < fam.modes.cols(); ++m)
    for (double sign : {-3.0, 3.0}) {
      const Vertices x = unflatten(rest + sign * fam.mode_scales[m] * fam.modes.col(m));
      EXPECT_TRUE(no_face_flips(fam, x)) << "mode " << m << " at " << sign << " sigma";
    }
}

TEST(Family, DeterministicUnderSeed) {
  const SyntheticFamily other = make_family(FamilyConfig{});
  EXPECT_EQ(other.modes, family().modes);
  std::mt19937_64 r1(9), r2(9);
  const Subject a = sample_subject(family(), r1), b = sample_subject(family(), r2);
  EXPECT_EQ(a.alpha, b.alpha);
  EXPECT_EQ(canonical_shape(family(), a), canonical_shape(family(), b));
}

TEST(Family, BumpsLieOutsideTheModeSpan) {
  const SyntheticFamily& fam = family();
  Subject s;
  s.alpha = VectorX::Zero(fam.modes.cols());
  s.bump_height = VectorX::Constant(3, 0.02);
  s.bump_slide = VectorX::Constant(3, 0.5);
  const VectorX d = flatten(canonical_shape(fam, s)) - flatten(fam.bundle.mesh().vertices());
  const VectorX residual = d - fam.modes * (fam.modes.transpose() * d);
  EXPECT_GT(residual.norm(), 0.9 * d.norm());
}

TEST(Family, RejectsInconsistentConfig) {
  FamilyConfig c;
  c.num_modes = 0;
  EXPECT_THROW(make_family(c), Error);
  c = FamilyConfig{};
  c.coefficient_dof = 1.5;
  EXPECT_THROW(make_family(c), Error);
}

TEST(Scan, NoiseFreePointsLieOnTheSurface) {
  const SyntheticFamily& fam = family();
  std::mt19937_64 rng(1);
  ScanOptions o;
  o.num_points = 500;
  o.noise_std = 0.0;
  const SyntheticScan s = make_scan(fam, sample_subject(fam, rng), sample_pose(fam, rng), o, rng);
  ASSERT_EQ(s.scan.size(), 500);
  const SurfaceBvh bvh(s.posed, fam.bundle.mesh().faces());
  for (int i = 0; i < s.scan.size(); ++i) EXPECT_LT(std::sqrt(bvh.closest(s.scan.points().row(i).transpose()).d2), 1e-9);
}

TEST(Scan, NoiseRmsMatchesStd) {
  const SyntheticFamily& fam = family();
  std::mt19937_64 rng(2);
  ScanOptions o;
  o.num_points = 10000;
  o.noise_std = 0.002;
  const SyntheticScan s = make_scan(fam, sample_subject(fam, rng), fam.nominal_pose, o, rng);
  const SurfaceBvh bvh(s.posed, fam.bundle.mesh().faces());
  double sum = 0.0;
  for (int i = 0; i < s.scan.size(); ++i) sum += bvh.closest(s.scan.points().row(i).transpose()).d2;
  const double rms = std::sqrt(sum / s.scan.size());
  EXPECT_GT(rms, 0.0017);
  EXPECT_LT(rms, 0.0023);
}

TEST(Scan, DeterministicUnderSeed) {
  const SyntheticFamily& fam = family();
  std::mt19937_64 a(5), b(5);
  const SyntheticScan s1 = make_scan(fam, sample_subject(fam, a), sample_pose(fam, a), ScanOptions{}, a);
  const SyntheticScan s2 = make_scan(fam, sample_subject(fam, b), sample_pose(fam, b), ScanOptions{}, b);
  EXPECT_EQ(s1.scan.points(), s2.scan.points());
}

TEST(Scan, RejectsSparseOrMostlyRemovedScans) {
  const SyntheticFamily& fam = family();
  std::mt19937_64 rng(3);
  const Subject sub = sample_subject(fam, rng);
  ScanOptions sparse;
  sparse.num_points = 499;
  EXPECT_THROW(make_scan(fam, sub, fam.nominal_pose, sparse, rng), DimensionError);
  ScanOptions holey;
  holey.holes = {{0, 5.0}};
  EXPECT_THROW(make_scan(fam, sub, fam.nominal_pose, holey, rng), GeometryError);
}

TEST(Scan, HoleRemovesNearbyPoints) {
  const SyntheticFamily& fam = family();
  std::mt19937_64 rng(4);
  const Subject sub = sample_subject(fam, rng);
  // Forearm: vertex nearest the middle of the left forearm.
  const Vertices& t = fam.bundle.mesh().vertices();
  int center = 0;
  (t.rowwise() - Eigen::RowVector3d(0.63, 1.41, 0.0)).rowwise().squaredNorm().minCoeff(&center);
  ScanOptions o;
  o.noise_std = 0.0;
  o.holes = {{center, 0.06}};
  const SyntheticScan s = make_scan(fam, sub, fam.nominal_pose, o, rng);
  EXPECT_LT(s.scan.size(), o.num_points);
  const Vec3 c = s.posed.row(center).transpose();
  for (int i = 0; i < s.scan.size(); ++i) EXPECT_GT((s.scan.points().row(i).transpose() - c).norm(), 0.015);
}

TEST(Scan, FitConvergesDespiteForearmHole) {
  const SyntheticFamily& fam = family();
  std::mt19937_64 rng(6);
  std::vector<Vertices> shapes;
  for (int i = 0; i < 30; ++i) shapes.push_back(canonical_shape(fam, sample_subject(fam, rng)));
  const shape::ShapeSpace space = shape::fit_pca(shapes, 11);
  const Vertices& t = fam.bundle.mesh().vertices();
  int center = 0;
  (t.rowwise() - Eigen::RowVector3d(0.63, 1.41, 0.0)).rowwise().squaredNorm().minCoeff(&center);
  ScanOptions o;
  o.holes = {{center, 0.08}};
  const SyntheticScan s = make_scan(fam, sample_subject(fam, rng), sample_pose(fam, rng), o, rng);
  const fit::FitResult r = fit::fit_scan(space, fam.bundle, s.scan, fam.nominal_pose);
  EXPECT_TRUE(r.converged);
  EXPECT_LT(v2v(r.canonical, s.canonical), 0.03);
}

TEST(Metrics, V2vOracles) {
  std::mt19937_64 rng(7);
  const mesh::TriMesh m = bumpy_patch(rng);
  EXPECT_EQ(v2v(m, m), 0.0);
  Vertices shifted = m.vertices();
  shifted.col(0).array() += 0.01;
  EXPECT_NEAR(v2v(m.with_vertices(shifted), m), 0.01, 1e-15);
  const mesh::TriMesh other = bumpy_patch(rng);
  double brute = 0.0;
  for (int i = 0; i < m.num_vertices(); ++i) {
    double s = 0.0;
    for (int a = 0; a < 3; ++a) s += std::pow(m.vertices()(i, a) - other.vertices()(i, a), 2);
    brute += std::sqrt(s);
  }
  EXPECT_NEAR(v2v(m, other), brute / m.num_vertices(), 1e-15);
  EXPECT_THROW(v2v(m, mesh::make_grid_patch(3, 3, 1.0, 1.0)), GeometryError);
}

TEST(Metrics, V2pOracles) {
  std::mt19937_64 rng(8);
  const mesh::TriMesh m = bumpy_patch(rng);
  EXPECT_LT(v2p(m, m), 1e-15);
  const mesh::TriMesh plane = mesh::make_grid_patch(4, 4, 1.0, 1.0);
  Vertices up = plane.vertices();
  up.col(2).array() += 0.02;
  EXPECT_NEAR(v2p(plane.with_vertices(up), plane), 0.02, 1e-15);
}

TEST(Metrics, ClosestPointMatchesBruteForce) {
  std::mt19937_64 rng(9);
  const mesh::TriMesh m = bumpy_patch(rng, 0.2);
  ASSERT_EQ(m.num_faces(), 200);
  const SurfaceBvh bvh(m.vertices(), m.faces());
  std::uniform_real_distribution<double> u(-0.3, 1.3);
  for (int t = 0; t < 300; ++t) {
    const Vec3 q(u(rng), u(rng), 0.5 * u(rng));
    const double brute = distance_to_mesh(q, m.vertices(), m.faces());
    EXPECT_NEAR(std::sqrt(bvh.closest(q).d2), brute, 1e-12);
  }
  Vertices pred = m.vertices();
  for (int i = 0; i < pred.rows(); ++i) pred.row(i) += Eigen::RowVector3d(u(rng), u(rng), u(rng)) * 0.05;
  const Vertices normals = mesh::vertex_normals(m.vertices(), m.faces());
  double brute = 0.0;
  for (int i = 0; i < pred.rows(); ++i)
    brute += brute_v2p_point(pred.row(i).transpose(), m.vertices(), m.faces(), normals);
  EXPECT_NEAR(v2p(pred, m.vertices(), m.faces()), brute / pred.rows(), 1e-12);
}

TEST(Metrics, PlaneDistanceNeverExceedsVertexDistance) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> g(0.0, 0.02);
  for (int t = 0; t < 20; ++t) {
    const mesh::TriMesh gt = bumpy_patch(rng);
    Vertices pred = gt.vertices();
    for (int i = 0; i < pred.rows(); ++i) pred.row(i) += Eigen::RowVector3d(g(rng), g(rng), g(rng));
    EXPECT_LE(v2p(pred, gt.vertices(), gt.faces()), v2v(pred, gt.vertices()));
  }
}

TEST(Metrics, DiversityOracles) {
  std::mt19937_64 rng(11);
  const SyntheticFamily& fam = family();
  std::vector<Vertices> shapes;
  for (int i = 0; i < 20; ++i) shapes.push_back(canonical_shape(fam, sample_subject(fam, rng)));
  const shape::ShapeSpace a = shape::fit_pca(std::vector<Vertices>(shapes.begin(), shapes.begin() + 10), 4);
  const shape::ShapeSpace b = shape::fit_pca(std::vector<Vertices>(shapes.begin() + 10, shapes.end()), 4);

  const auto same = shape::sample_space(a, shape::SampleMode::Farthest, 10, rng).shapes;
  const MatrixX self = diversity_from_samples({same, same});
  EXPECT_EQ(self(0, 1), 0.0);
  EXPECT_EQ(self(1, 0), 0.0);
  EXPECT_GT(self(0, 0), 0.0);

  const shape::ShapeSpace flat(a.mean(), a.basis(), VectorX::Zero(a.k()));
  EXPECT_EQ(diversity_table({flat}, 5, 1)(0, 0), 0.0);

  const MatrixX table = diversity_table({a, b}, 50, 12);
  std::mt19937_64 replay(12);
  const auto sa = shape::sample_space(a, shape::SampleMode::Farthest, 50, replay).shapes;
  const auto sb = shape::sample_space(b, shape::SampleMode::Farthest, 50, replay).shapes;
  const std::vector<std::vector<Vertices>> sets = {sa, sb};
  for (int p = 0; p < 2; ++p)
    for (int q = 0; q < 2; ++q) {
      double total = 0.0;
      for (int i = 0; i < 50; ++i) {
        double best = INFINITY;
        for (int j = 0; j < 50; ++j) {
          if (p == q && i == j) continue;
          double d = 0.0;
          for (int r = 0; r < sets[p][i].rows(); ++r) d += (sets[p][i].row(r) - sets[q][j].row(r)).norm();
          best = std::min(best, d / sets[p][i].rows());
        }
        total += best;
      }
      EXPECT_NEAR(table(p, q), total / 50.0, 1e-12) << p << "," << q;
    }
}

TEST(Metrics, HistogramCountsEveryValue) {
  VectorX v(5);
  v << 0.0, 0.1, 0.25, 0.99, 3.0;
  const Histogram h = histogram(v, 4, 1.0);
  ASSERT_EQ(h.counts.size(), 4u);
  EXPECT_EQ(h.counts[0], 2);
  EXPECT_EQ(h.counts[1], 1);
  EXPECT_EQ(h.counts[3], 2);
  EXPECT_DOUBLE_EQ(h.edges.back(), 1.0);
}
