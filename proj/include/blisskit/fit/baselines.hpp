#pragma once

#include "blisskit/core/types.hpp"
#include "blisskit/mesh/scan_cloud.hpp"
#include "blisskit/rig/rig.hpp"

namespace blisskit::fit {

enum class Regularizer { SmallDisplacement, EdgePreserving };

struct FreeformOptions {
  Regularizer regularizer = Regularizer::SmallDisplacement;
  double weight = 1e-3;
  int iterations = 300;
};

// Free-form refinement of canonical vertices: minimizes the posed Chamfer
// distance to the scan plus weight * R, with R = sum |v - v_o|^2 or
// sum over edges (|e| - |e_o|)^2. Gradient descent with backtracking; the
// pose is held at `pose`.
Vertices baseline_freeform(const rig::TemplateBundle& bundle, const Vertices& x_o, const rig::Pose& pose,
                           const mesh::ScanCloud& scan, const FreeformOptions& opts);

}  // namespace blisskit::fit
