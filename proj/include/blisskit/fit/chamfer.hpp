#pragma once

#include "blisskit/core/types.hpp"
#include "blisskit/fit/nn_index.hpp"

namespace blisskit::fit {

// Symmetric squared Chamfer distance with per-set means:
// mean_a min_b |a - b|^2 + mean_b min_a |a - b|^2 (m^2).
double chamfer(const Points& a, const Points& b);

// Same, reusing a prebuilt index over b.
double chamfer(const Points& a, const Points& b, const NnIndex& b_index);

}  // namespace blisskit::fit
