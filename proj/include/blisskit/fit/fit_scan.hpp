#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "blisskit/core/types.hpp"
#include "blisskit/fit/nn_index.hpp"
#include "blisskit/mesh/scan_cloud.hpp"
#include "blisskit/rig/rig.hpp"
#include "blisskit/shape/shape_space.hpp"

namespace blisskit::fit {

struct FitOptions {
  double lambda_alpha = 1e-3;    // prior weight per template vertex, see FrozenObjective
  double tolerance = 1e-7;       // stop once an accepted step improves the objective by less (m^2)
  int max_iterations = 200;
  int divergence_patience = 10;  // consecutive objective increases before giving up
  bool use_corrective = true;
  bool optimize_shape = true;    // false: pose and translation only
  // Also match the scan against edge midpoints of the posed mesh. Scan points
  // lie on the faces; with vertices alone they pull the surface toward its
  // vertex set and shrink the fit at coarse resolutions.
  bool edge_samples = true;
};

struct FitResult {
  VectorX alpha;
  rig::Pose pose;
  Vertices canonical;      // X_o = mean + basis alpha
  double posed_chamfer = 0.0;
  double objective = 0.0;  // chamfer + prior
  int iterations = 0;
  bool converged = false;
};

// Parameters packed as [alpha (k), theta (3K), translation (3)].
VectorX pack_params(const VectorX& alpha, const rig::Pose& pose);
void unpack_params(const VectorX& p, int k, VectorX& alpha, rig::Pose& pose);

// Chamfer objective with nearest-neighbour correspondences frozen at a
// reference parameter vector:
//   (1/P) sum_i |v_i - s_n(i)|^2 + (1/M) sum_j |v_c(j) - s_j|^2
//     + (lambda / N) sum_i (alpha_i / std_i)^2
// where v are the P model points: the posed vertices, followed by the edge
// midpoints when edge_samples is set. The prior is divided by the template vertex
// count so it acts like a per-vertex penalty next to the mean-normalized data term.
class FrozenObjective {
 public:
  FrozenObjective(const shape::ShapeSpace& space, const rig::TemplateBundle& bundle, const Points& scan,
                  const NnIndex& scan_index, const VectorX& params, const FitOptions& opts);

  double value(const VectorX& params) const;
  VectorX gradient(const VectorX& params) const;
  // Gauss-Newton approximation of the Hessian together with the gradient.
  void gauss_newton(const VectorX& params, MatrixX& hessian, VectorX& grad) const;

  const std::vector<int>& model_to_scan() const { return model_to_scan_; }
  const std::vector<int>& scan_to_model() const { return scan_to_model_; }

 private:
  Vertices posed(const VectorX& params) const;
  // dE/dp for the data term at every model point, and Gauss-Newton weights.
  Points point_gradient(const Points& p, VectorX* weights) const;
  MatrixX param_jacobian(const VectorX& params) const;  // 3N x P
  double prior(const VectorX& params) const;

  const shape::ShapeSpace* space_;
  const rig::TemplateBundle* bundle_;
  const Points* scan_;
  FitOptions opts_;
  std::vector<std::array<int, 2>> edges_;
  std::vector<int> model_to_scan_;
  std::vector<int> scan_to_model_;
  VectorX counts_;
};

// Model points of a posed mesh: vertices, then edge midpoints if requested.
Points model_points(const Vertices& posed, const std::vector<std::array<int, 2>>& edges);

// Posed Chamfer of the model points plus the prior at the given parameters
// (correspondences fresh). chamfer_out receives the vertex-only Chamfer.
double fit_objective(const shape::ShapeSpace& space, const rig::TemplateBundle& bundle, const Points& scan,
                     const NnIndex& scan_index, const VectorX& params, const FitOptions& opts, double* chamfer_out);

// ICP-style alternation of correspondence search and Levenberg-Marquardt
// steps on (alpha, theta, t). Returns the best parameters seen.
FitResult fit_scan(const shape::ShapeSpace& space, const rig::TemplateBundle& bundle, const mesh::ScanCloud& scan,
                   const rig::Pose& init_pose, const FitOptions& opts = {});

struct Landmark {
  int vertex_id;
  Vec3 position;
};

std::vector<Landmark> load_landmarks(const std::filesystem::path& path);

// Rigid Kabsch alignment of the mean shape's landmark vertices to the given
// positions, followed by a pose-only least-squares refinement on the
// landmarks. Returns a warm-start pose.
rig::Pose landmark_warm_start(const shape::ShapeSpace& space, const rig::TemplateBundle& bundle,
                              const std::vector<Landmark>& landmarks, const rig::Pose& init_pose);

}  // namespace blisskit::fit
