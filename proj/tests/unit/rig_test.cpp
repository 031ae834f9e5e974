#include <gtest/gtest.h>

#include <filesystem>

#include <Eigen/Geometry>

#include "blisskit/rig/rig.hpp"
#include "fixtures.hpp"

using namespace blisskit;
using namespace blisskit::rig;

namespace {

shape::ShapeSpace tube_space(const TemplateBundle& b, int k, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  const int d = 3 * b.num_vertices();
  MatrixX basis(d, k);
  for (int i = 0; i < basis.size(); ++i) basis.data()[i] = g(rng);
  Eigen::HouseholderQR<MatrixX> qr(basis);
  basis = qr.householderQ() * MatrixX::Identity(d, k);
  VectorX std(k);
  for (int i = 0; i < k; ++i) std[i] = 0.02 / (i + 1);
  return shape::ShapeSpace(flatten(b.mesh().vertices()), basis, std);
}

double rel_err(const MatrixX& a, const MatrixX& b) { return (a - b).norm() / std::max(b.norm(), 1e-12); }

}  // namespace

TEST(Rig, RodriguesMatchesAngleAxis) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (int t = 0; t < 20; ++t) {
    const Vec3 w(g(rng), g(rng), g(rng));
    const Mat3 expect = Eigen::AngleAxisd(w.norm(), w.normalized()).toRotationMatrix();
    EXPECT_LT((rodrigues(w) - expect).cwiseAbs().maxCoeff(), 1e-14);
  }
  EXPECT_EQ(rodrigues(Vec3::Zero()), Mat3::Identity());
}

TEST(Rig, LeftJacobianMatchesFiniteDifferences) {
  const Vec3 w(0.3, -0.7, 1.1);
  const Mat3 jl = so3_left_jacobian(w);
  const Mat3 r = rodrigues(w);
  const double h = 1e-6;
  for (int c = 0; c < 3; ++c) {
    Vec3 e = Vec3::Zero();
    e[c] = h;
    const Mat3 d = (rodrigues(w + e) - rodrigues(w - e)) / (2.0 * h);
    // d R = [J_l e_c]_x R, so d R R^T is skew with axis J_l e_c.
    const Mat3 s = d * r.transpose();
    const Vec3 axis(s(2, 1), s(0, 2), s(1, 0));
    EXPECT_LT((axis - jl.col(c)).norm(), 1e-8);
  }
}

TEST(Rig, PoseWrapKeepsRotation) {
  Pose p = Pose::identity(2);
  p.theta.row(0) << 4.0, 0.0, 0.0;
  p.theta.row(1) << 0.0, -9.0, 3.0;
  const Pose q = p.wrapped();
  for (int j = 0; j < 2; ++j) {
    EXPECT_LE(q.theta.row(j).norm(), std::numbers::pi + 1e-12);
    EXPECT_LT((rodrigues(q.theta.row(j).transpose()) - rodrigues(p.theta.row(j).transpose())).cwiseAbs().maxCoeff(),
              1e-12);
  }
}

TEST(Rig, BundleValidation) {
  const TemplateBundle b = fixtures::make_tube_bundle();
  RowMatrixX w = b.skin_weights();
  w(0, 0) += 0.1;
  EXPECT_THROW(TemplateBundle(b.mesh(), b.parents(), {}, w, b.regressor()), GeometryError);
  EXPECT_THROW(TemplateBundle(b.mesh(), {-1, 0, 1, -1}, {}, b.skin_weights(), b.regressor()), GeometryError);
  EXPECT_THROW(TemplateBundle(b.mesh(), {1, 2, 1, 0}, {}, b.skin_weights(), b.regressor()), GeometryError);
  EXPECT_EQ(b.topological_order().front(), 0);
}

TEST(Rig, IdentityPoseIsIdentityMap) {
  const TemplateBundle b = fixtures::make_tube_bundle();
  const Vertices x = b.mesh().vertices() * 1.1;
  EXPECT_LT((skin(b, x, Pose::identity(4)) - x).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Rig, TranslationOnly) {
  const TemplateBundle b = fixtures::make_tube_bundle();
  Pose p = Pose::identity(4);
  p.translation = Vec3(1, 0, 0);
  Vertices expect = b.mesh().vertices();
  expect.col(0).array() += 1.0;
  EXPECT_LT((skin(b, b.mesh().vertices(), p) - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Rig, RootRotationIsRigidAboutRootJoint) {
  const TemplateBundle b = fixtures::make_tube_bundle();
  const Vertices& x = b.mesh().vertices();
  Pose p = Pose::identity(4);
  p.theta.row(0) << 0.2, -0.5, 0.9;
  const Mat3 r = rodrigues(p.theta.row(0).transpose());
  const Vec3 root = b.joints(x).row(0).transpose();
  const Vertices out = skin(b, x, p);
  for (int i = 0; i < x.rows(); ++i) {
    const Vec3 expect = r * (x.row(i).transpose() - root) + root;
    EXPECT_LT((out.row(i).transpose() - expect).norm(), 1e-12);
  }
}

TEST(Rig, JointReorderingInvariance) {
  const TemplateBundle b = fixtures::make_tube_bundle();
  // New index of old joint j is perm[j].
  const std::vector<int> perm = {2, 0, 3, 1};
  std::vector<int> parents(4);
  std::vector<std::string> names(4);
  RowMatrixX w(b.num_vertices(), 4);
  const RowMatrixX reg_dense = RowMatrixX(b.regressor());
  RowMatrixX reg(4, b.num_vertices());
  for (int j = 0; j < 4; ++j) {
    parents[perm[j]] = b.parents()[j] < 0 ? -1 : perm[b.parents()[j]];
    names[perm[j]] = b.joint_names()[j];
    w.col(perm[j]) = b.skin_weights().col(j);
    reg.row(perm[j]) = reg_dense.row(j);
  }
  const TemplateBundle c(b.mesh(), parents, names, w, reg.sparseView());
  std::mt19937_64 rng(4);
  const Pose p = fixtures::random_pose(4, rng);
  Pose q = p;
  for (int j = 0; j < 4; ++j) q.theta.row(perm[j]) = p.theta.row(j);
  EXPECT_LT((skin(b, b.mesh().vertices(), p) - skin(c, c.mesh().vertices(), q)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Rig, SynthesizeCanonical) {
  const TemplateBundle b = fixtures::make_tube_bundle(12, 10, true);
  const shape::ShapeSpace s = tube_space(b, 5, 3);
  const Pose id = Pose::identity(4);
  EXPECT_EQ(synthesize_canonical(s, VectorX::Zero(5), b, id), b.mesh().vertices());
  VectorX a = VectorX::Zero(5);
  a[0] = 0.03;
  const Vertices e1 = synthesize_canonical(s, a, b, id);
  EXPECT_LT((flatten(e1) - (s.mean() + 0.03 * s.basis().col(0))).cwiseAbs().maxCoeff(), 1e-15);

  std::mt19937_64 rng(5);
  const Pose p = fixtures::random_pose(4, rng);
  VectorX alpha(5);
  alpha << 0.01, -0.02, 0.005, 0.0, 0.03;
  VectorX direct = s.mean() + s.basis() * alpha;
  for (int row = 0; row < direct.size(); ++row)
    for (int j = 0; j < 4; ++j)
      for (int c = 0; c < 3; ++c) direct[row] += b.corrective()(row, 3 * j + c) * p.theta(j, c);
  EXPECT_LT((flatten(synthesize_canonical(s, alpha, b, p)) - direct).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(synthesize_canonical(s, VectorX::Zero(4), b, p), DimensionError);
}

TEST(Rig, SynthesizeIsLinearInAlpha) {
  const TemplateBundle b = fixtures::make_tube_bundle();
  const shape::ShapeSpace s = tube_space(b, 4, 9);
  const Pose id = Pose::identity(4);
  VectorX a1(4), a2(4);
  a1 << 0.01, 0.02, -0.01, 0.0;
  a2 << -0.03, 0.0, 0.02, 0.01;
  const Vertices m = synthesize_canonical(s, VectorX::Zero(4), b, id);
  const Vertices lhs = synthesize_canonical(s, 2.0 * a1 + 3.0 * a2, b, id) - m;
  const Vertices rhs =
      2.0 * (synthesize_canonical(s, a1, b, id) - m) + 3.0 * (synthesize_canonical(s, a2, b, id) - m);
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Rig, SkinJacobianAtRestPose) {
  const TemplateBundle b = fixtures::make_tube_bundle(6, 6);
  const SkinJacobian j(b, b.mesh().vertices(), Pose::identity(4));
  const MatrixX d = j.dense();
  const int n = b.num_vertices();
  for (int i = 0; i < n; ++i) EXPECT_LT((d.block<3, 3>(3 * i, 12) - Mat3::Identity()).norm(), 1e-14);
  EXPECT_LT((d.rightCols(3 * n) - MatrixX::Identity(3 * n, 3 * n)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Rig, SkinJacobianMatchesFiniteDifferences) {
  const TemplateBundle b = fixtures::make_tube_bundle(6, 6);
  std::mt19937_64 rng(7);
  const Pose p = fixtures::random_pose(4, rng, 0.6);
  Vertices x = b.mesh().vertices();
  std::normal_distribution<double> g(0.0, 0.01);
  for (int i = 0; i < x.size(); ++i) x.data()[i] += g(rng);
  const MatrixX analytic = SkinJacobian(b, x, p).dense();
  const double h = 1e-6;
  const VectorX pv = p.to_vector();
  MatrixX fd(analytic.rows(), analytic.cols());
  for (int c = 0; c < pv.size(); ++c) {
    VectorX up = pv, dn = pv;
    up[c] += h;
    dn[c] -= h;
    fd.col(c) = (flatten(skin(b, x, Pose::from_vector(up))) - flatten(skin(b, x, Pose::from_vector(dn)))) / (2 * h);
  }
  for (int c = 0; c < x.size(); ++c) {
    Vertices up = x, dn = x;
    up.data()[c] += h;
    dn.data()[c] -= h;
    fd.col(pv.size() + c) = (flatten(skin(b, up, p)) - flatten(skin(b, dn, p))) / (2 * h);
  }
  EXPECT_LT(rel_err(analytic.leftCols(pv.size()), fd.leftCols(pv.size())), 1e-4);
  EXPECT_LT(rel_err(analytic, fd), 1e-4);
}

TEST(Rig, VjpIsTransposeOfJvp) {
  const TemplateBundle b = fixtures::make_tube_bundle(8, 6);
  std::mt19937_64 rng(8);
  const Pose p = fixtures::random_pose(4, rng, 0.5);
  const SkinJacobian j(b, b.mesh().vertices(), p);
  std::normal_distribution<double> g;
  JointAngles dth(4, 3);
  Vertices dx(b.num_vertices(), 3), dv(b.num_vertices(), 3);
  for (int i = 0; i < dth.size(); ++i) dth.data()[i] = g(rng);
  for (int i = 0; i < dx.size(); ++i) {
    dx.data()[i] = g(rng);
    dv.data()[i] = g(rng);
  }
  const Vec3 dt(g(rng), g(rng), g(rng));
  const double lhs = (dv.array() * j.jvp(dth, dt, dx).array()).sum();
  const auto c = j.vjp(dv);
  const double rhs = (c.theta.array() * dth.array()).sum() + c.translation.dot(dt) + (c.canonical.array() * dx.array()).sum();
  EXPECT_NEAR(lhs, rhs, 1e-10 * std::abs(lhs));
  EXPECT_LT((j.posed() - skin(b, b.mesh().vertices(), p)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Rig, BundleRoundTrip) {
  const TemplateBundle b = fixtures::make_tube_bundle(8, 6, true);
  const auto dir = std::filesystem::temp_directory_path() / "blisskit_rig_bundle";
  std::filesystem::remove_all(dir);
  save_bundle(b, dir);
  const TemplateBundle r = load_bundle(dir);
  EXPECT_EQ(r.parents(), b.parents());
  EXPECT_EQ(r.joint_names(), b.joint_names());
  EXPECT_EQ(r.skin_weights(), b.skin_weights());
  EXPECT_EQ(MatrixX(r.regressor()), MatrixX(b.regressor()));
  EXPECT_EQ(r.corrective(), b.corrective());
  EXPECT_LT((r.mesh().vertices() - b.mesh().vertices()).cwiseAbs().maxCoeff(), 1e-8);
  std::filesystem::remove_all(dir);
}
