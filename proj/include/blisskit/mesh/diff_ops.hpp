#pragma once

#include <memory>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "blisskit/core/types.hpp"
#include "blisskit/mesh/tri_mesh.hpp"

namespace blisskit::mesh {

// Per-triangle 3x3 matrices, one row per face, row-major flattening:
// entry (a, b) of face f lives at (f, 3 * a + b).
using JacobianField = Eigen::Matrix<double, Eigen::Dynamic, 9, Eigen::RowMajor>;

inline Mat3 jacobian_at(const JacobianField& j, int f) {
  return Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(j.row(f).data());
}

inline void set_jacobian(JacobianField& j, int f, const Mat3& m) {
  Eigen::Map<Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(j.row(f).data()) = m;
}

using SparseMatrix = Eigen::SparseMatrix<double>;

// Differential operators of a rest mesh: intrinsic gradient, cotangent
// Laplacian, triangle areas and a prefactorized Laplacian with vertex 0
// pinned. Immutable; the factorization is shared between copies and supports
// concurrent solves.
class DiffOps {
 public:
  // Throws GeometryError naming the first degenerate face.
  static DiffOps build(const TriMesh& mesh);

  int num_vertices() const { return num_vertices_; }
  int num_faces() const { return num_faces_; }
  int pin() const { return 0; }

  // 3F x N: row 3f + b holds d/dp_b of the piecewise-linear hat functions on face f.
  const SparseMatrix& gradient() const { return gradient_; }
  // N x N, positive semi-definite, cotangent weights -(cot a + cot b) / 2 off the diagonal.
  const SparseMatrix& laplacian() const { return laplacian_; }
  const VectorX& face_areas() const { return face_areas_; }
  const Vertices& rest_face_normals() const { return rest_normals_; }
  const Faces& faces() const { return faces_; }

  // Tangential deformation gradients of a vertex array: (a, b) = d x_a / d p_b.
  JacobianField apply_gradient(const Vertices& x) const;

  // Area-weighted transpose of apply_gradient (G^T M y); N x 3.
  Vertices divergence(const JacobianField& y) const;

  // Solves the pinned system; the pin row of rhs is ignored and the pin of the
  // result is zero.
  Vertices solve_pinned(const Vertices& rhs) const;

 private:
  int num_vertices_ = 0;
  int num_faces_ = 0;
  Faces faces_;
  SparseMatrix gradient_;
  SparseMatrix laplacian_;
  VectorX face_areas_;
  Vertices rest_normals_;
  std::shared_ptr<const Eigen::SimplicialLDLT<SparseMatrix>> factor_;
};

// Deformation gradients of source -> target on the source's triangles. The
// tangent gradient is completed with (target normal) (source normal)^T so each
// Jacobian is a full 3x3 matrix; identity when target == source.
JacobianField compute_jacobians(const DiffOps& ops, const Vertices& target);

// Vertex positions minimizing sum_f area_f |grad_f X - J_f|^2, translated so
// the pin vertex lands on anchor. Linear in jac.
Vertices poisson_solve(const DiffOps& ops, const JacobianField& jac, const Vec3& anchor);

// d loss / d jac given d loss / d X for the output of poisson_solve.
JacobianField poisson_solve_adjoint(const DiffOps& ops, const Vertices& grad_wrt_vertices);

// Cotangent clamp range: [cot(175 deg), cot(5 deg)].
double clamp_cotangent(double cot);

}  // namespace blisskit::mesh
