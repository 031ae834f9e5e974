#include "blisskit/mesh/wks.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "blisskit/mesh/diff_ops.hpp"

namespace blisskit::mesh {

LaplaceSpectrum laplace_spectrum(const TriMesh& mesh, int count) {
  const int n = mesh.num_vertices();
  if (count < 1) throw DimensionError("laplace_spectrum: count must be >= 1");
  count = std::min(count, n);

  const DiffOps ops = DiffOps::build(mesh);
  const VectorX area = lumped_vertex_areas(mesh.vertices(), mesh.faces());
  const VectorX inv_sqrt = area.array().rsqrt();

  // Symmetric reduction A^{-1/2} L A^{-1/2}.
  MatrixX c = MatrixX(ops.laplacian());
  c = inv_sqrt.asDiagonal() * c * inv_sqrt.asDiagonal();
  c = 0.5 * (c + c.transpose());

  Eigen::SelfAdjointEigenSolver<MatrixX> solver(c);
  if (solver.info() != Eigen::Success) throw NumericalError("laplace_spectrum: eigensolver failed");

  LaplaceSpectrum s;
  s.eigenvalues = solver.eigenvalues().head(count);
  s.eigenvectors = inv_sqrt.asDiagonal() * solver.eigenvectors().leftCols(count);
  return s;
}

MatrixX wave_kernel_signature(const TriMesh& mesh, int n_signatures, const WksOptions& opts) {
  if (n_signatures < 1) throw DimensionError("wave_kernel_signature: n_signatures must be >= 1");
  if (mesh.num_vertices() < 3) throw GeometryError("wave_kernel_signature: mesh too small");
  if (connected_components(mesh.num_vertices(), mesh.faces()) != 1)
    throw GeometryError("wave_kernel_signature: mesh is not connected");

  const LaplaceSpectrum s = laplace_spectrum(mesh, opts.num_eigenpairs);
  const int m = static_cast<int>(s.eigenvalues.size());
  if (m < 2) throw GeometryError("wave_kernel_signature: need at least two eigenpairs");

  // Skip the constant mode; clamp tiny eigenvalues before taking logs.
  VectorX log_e(m - 1);
  for (int i = 1; i < m; ++i) log_e[i - 1] = std::log(std::max(s.eigenvalues[i], 1e-12));
  const double e_min = log_e[0];
  const double e_max = log_e.maxCoeff();
  const double range = std::max(e_max - e_min, 1e-12);
  const double sigma = opts.variance_factor * range / n_signatures;
  const double inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);

  const MatrixX phi2 = s.eigenvectors.rightCols(m - 1).array().square();
  MatrixX weights(m - 1, n_signatures);
  for (int j = 0; j < n_signatures; ++j) {
    const double e = n_signatures == 1 ? e_min : e_min + range * j / (n_signatures - 1);
    const VectorX w = (-(log_e.array() - e).square() * inv_two_sigma2).exp();
    weights.col(j) = w / w.sum();
  }
  MatrixX wks = phi2 * weights;
  for (int i = 0; i < wks.rows(); ++i) {
    const double sum = wks.row(i).sum();
    if (sum > 0.0) wks.row(i) /= sum;
  }
  return wks;
}

}  // namespace blisskit::mesh
