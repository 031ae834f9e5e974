#pragma once

#include "blisskit/core/types.hpp"
#include "blisskit/mesh/tri_mesh.hpp"

namespace blisskit::mesh {

// Lowest eigenpairs of L phi = lambda A phi (cotangent Laplacian, lumped
// areas). Eigenvectors are A-orthonormal columns; eigenvalues ascending.
struct LaplaceSpectrum {
  VectorX eigenvalues;
  MatrixX eigenvectors;  // N x count
};

// Dense solve; intended for meshes up to a few thousand vertices.
LaplaceSpectrum laplace_spectrum(const TriMesh& mesh, int count);

struct WksOptions {
  int num_eigenpairs = 128;
  double variance_factor = 7.0;
};

// Wave Kernel Signature, N x n_signatures, each row normalized to sum to one.
// Throws GeometryError for disconnected meshes.
MatrixX wave_kernel_signature(const TriMesh& mesh, int n_signatures, const WksOptions& opts = {});

}  // namespace blisskit::mesh
