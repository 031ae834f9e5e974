#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "blisskit/core/types.hpp"

namespace blisskit::shape {

// Linear shape space: mean plus k orthonormal modes over 3N flattened
// vertex coordinates.
class ShapeSpace {
 public:
  ShapeSpace() = default;
  // basis is 3N x k with orthonormal columns; mode_std is per-mode standard
  // deviation in meters (non-increasing).
  ShapeSpace(VectorX mean, MatrixX basis, VectorX mode_std, std::vector<std::string> provenance = {});

  const VectorX& mean() const { return mean_; }
  const MatrixX& basis() const { return basis_; }
  const VectorX& mode_std() const { return mode_std_; }
  const std::vector<std::string>& provenance() const { return provenance_; }
  int k() const { return static_cast<int>(basis_.cols()); }
  int num_vertices() const { return static_cast<int>(mean_.size() / 3); }

  Vertices mean_shape() const { return unflatten(mean_); }
  Vertices reconstruct(const VectorX& alpha) const;
  // Least-squares coefficients: basis^T (x - mean).
  VectorX project(const Vertices& x) const;

 private:
  VectorX mean_;
  MatrixX basis_;
  VectorX mode_std_;
  std::vector<std::string> provenance_;
};

// PCA of registered shapes sharing one topology. Needs at least k + 1 shapes.
// Modes are sign-normalized so each basis vector's largest-magnitude entry is
// positive; mode_std is singular value / sqrt(n - 1).
ShapeSpace fit_pca(const std::vector<Vertices>& shapes, int k, std::vector<std::string> ids = {});

// Fraction of the total variance of `shapes` (about their own mean) that is
// captured by projecting onto the space's span.
double explained_variance(const ShapeSpace& space, const std::vector<Vertices>& shapes);

enum class SampleMode { Random, Farthest };

struct SpaceSamples {
  std::vector<Vertices> shapes;
  MatrixX alphas;  // count x k
};

// Random: alpha_i ~ N(0, std_i^2) clipped at +-3 std. Farthest: greedy
// farthest-point selection (v2v metric) from a 20x oversampled random pool,
// seeded with the mean shape.
SpaceSamples sample_space(const ShapeSpace& space, SampleMode mode, int count, std::mt19937_64& rng);

// Vertex arrays along one mode at the given multiples of its std.
std::vector<Vertices> mode_sweep(const ShapeSpace& space, int mode, const std::vector<double>& sigmas);

// Mean Euclidean distance between corresponding rows.
double mean_vertex_distance(const Vertices& a, const Vertices& b);

// space.bin (header "BLSS", N, k, reserved; then mean, basis vectors, std as
// little-endian float64) plus space.json with provenance.
void save_space(const ShapeSpace& space, const std::filesystem::path& dir);
ShapeSpace load_space(const std::filesystem::path& dir);

}  // namespace blisskit::shape
