#include "blisskit/mesh/diff_ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace blisskit::mesh {

namespace {

const double kCotMax = 1.0 / std::tan(5.0 * std::numbers::pi / 180.0);

}  // namespace

double clamp_cotangent(double cot) { return std::clamp(cot, -kCotMax, kCotMax); }

DiffOps DiffOps::build(const TriMesh& mesh) {
  const Vertices& v = mesh.vertices();
  const Faces& f = mesh.faces();
  if (const int bad = find_degenerate_face(v, f); bad >= 0)
    throw GeometryError("degenerate face " + std::to_string(bad) + " (area <= 1e-12 m^2)");

  DiffOps ops;
  ops.num_vertices_ = mesh.num_vertices();
  ops.num_faces_ = mesh.num_faces();
  ops.faces_ = f;
  ops.face_areas_ = mesh::face_areas(v, f);
  ops.rest_normals_ = face_normals(v, f);

  const int nf = ops.num_faces_;
  const int nv = ops.num_vertices_;
  std::vector<Eigen::Triplet<double>> g_trip;
  std::vector<Eigen::Triplet<double>> l_trip;
  g_trip.reserve(static_cast<std::size_t>(nf) * 9);
  l_trip.reserve(static_cast<std::size_t>(nf) * 12);

  for (int k = 0; k < nf; ++k) {
    const Vec3 p[3] = {v.row(f(k, 0)).transpose(), v.row(f(k, 1)).transpose(), v.row(f(k, 2)).transpose()};
    const Vec3 n = ops.rest_normals_.row(k).transpose();
    const double two_area = 2.0 * ops.face_areas_[k];
    for (int i = 0; i < 3; ++i) {
      // Edge opposite vertex i, counter-clockwise.
      const Vec3 e = p[(i + 2) % 3] - p[(i + 1) % 3];
      const Vec3 grad = n.cross(e) / two_area;
      for (int b = 0; b < 3; ++b) g_trip.emplace_back(3 * k + b, f(k, i), grad[b]);
    }
    for (int i = 0; i < 3; ++i) {
      const int j = (i + 1) % 3;
      const int l = (i + 2) % 3;
      const Vec3 ea = p[j] - p[i];
      const Vec3 eb = p[l] - p[i];
      const double cot = clamp_cotangent(ea.dot(eb) / ea.cross(eb).norm());
      const double w = 0.5 * cot;
      const int vj = f(k, j), vl = f(k, l);
      l_trip.emplace_back(vj, vl, -w);
      l_trip.emplace_back(vl, vj, -w);
      l_trip.emplace_back(vj, vj, w);
      l_trip.emplace_back(vl, vl, w);
    }
  }
  ops.gradient_.resize(3 * nf, nv);
  ops.gradient_.setFromTriplets(g_trip.begin(), g_trip.end());
  ops.laplacian_.resize(nv, nv);
  ops.laplacian_.setFromTriplets(l_trip.begin(), l_trip.end());

  // Pin vertex 0: replace its row and column by the identity.
  const int pin = ops.pin();
  std::vector<Eigen::Triplet<double>> p_trip;
  p_trip.reserve(static_cast<std::size_t>(ops.laplacian_.nonZeros()));
  for (int c = 0; c < ops.laplacian_.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(ops.laplacian_, c); it; ++it)
      if (it.row() != pin && it.col() != pin) p_trip.emplace_back(it.row(), it.col(), it.value());
  p_trip.emplace_back(pin, pin, 1.0);
  SparseMatrix pinned(nv, nv);
  pinned.setFromTriplets(p_trip.begin(), p_trip.end());

  auto factor = std::make_shared<Eigen::SimplicialLDLT<SparseMatrix>>();
  factor->compute(pinned);
  if (factor->info() != Eigen::Success)
    throw NumericalError("pinned Laplacian factorization failed (disconnected mesh?)");
  const VectorX d = factor->vectorD();
  if ((d.array() <= 0.0).any())
    throw NumericalError("pinned Laplacian is not positive definite (disconnected mesh?)");
  ops.factor_ = std::move(factor);
  return ops;
}

JacobianField DiffOps::apply_gradient(const Vertices& x) const {
  if (x.rows() != num_vertices_) throw DimensionError("apply_gradient: vertex count mismatch");
  const Eigen::MatrixXd gx = gradient_ * x;  // 3F x 3, (3f + b, a)
  JacobianField j(num_faces_, 9);
  for (int k = 0; k < num_faces_; ++k)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) j(k, 3 * a + b) = gx(3 * k + b, a);
  return j;
}

Vertices DiffOps::divergence(const JacobianField& y) const {
  if (y.rows() != num_faces_) throw DimensionError("divergence: face count mismatch");
  Eigen::MatrixXd wy(3 * num_faces_, 3);
  for (int k = 0; k < num_faces_; ++k)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) wy(3 * k + b, a) = face_areas_[k] * y(k, 3 * a + b);
  Vertices out = gradient_.transpose() * wy;
  return out;
}

Vertices DiffOps::solve_pinned(const Vertices& rhs) const {
  if (rhs.rows() != num_vertices_) throw DimensionError("solve_pinned: vertex count mismatch");
  Eigen::MatrixXd b = rhs;
  b.row(pin()).setZero();
  Eigen::MatrixXd u = factor_->solve(b);
  if (factor_->info() != Eigen::Success) throw NumericalError("pinned Laplacian solve failed");
  Vertices out = u;
  out.row(pin()).setZero();
  return out;
}

JacobianField compute_jacobians(const DiffOps& ops, const Vertices& target) {
  JacobianField j = ops.apply_gradient(target);
  const Vertices tn = face_normals(target, ops.faces());
  const Vertices& sn = ops.rest_face_normals();
  for (int k = 0; k < ops.num_faces(); ++k) {
    Mat3 m = jacobian_at(j, k);
    m += tn.row(k).transpose() * sn.row(k);
    set_jacobian(j, k, m);
  }
  return j;
}

Vertices poisson_solve(const DiffOps& ops, const JacobianField& jac, const Vec3& anchor) {
  if (!jac.allFinite()) throw NumericalError("poisson_solve: non-finite Jacobian field");
  Vertices x = ops.solve_pinned(ops.divergence(jac));
  x.rowwise() += anchor.transpose();
  return x;
}

JacobianField poisson_solve_adjoint(const DiffOps& ops, const Vertices& grad_wrt_vertices) {
  const Vertices u = ops.solve_pinned(grad_wrt_vertices);
  JacobianField g = ops.apply_gradient(u);
  for (int k = 0; k < ops.num_faces(); ++k) g.row(k) *= ops.face_areas()[k];
  return g;
}

}  // namespace blisskit::mesh
