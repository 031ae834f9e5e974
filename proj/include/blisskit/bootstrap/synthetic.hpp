#pragma once

#include <cstdint>

#include "blisskit/bootstrap/bootstrap.hpp"
#include "blisskit/synth/family.hpp"
#include "blisskit/synth/scan.hpp"

namespace blisskit::bootstrap {

struct SplitSizes {
  int r_pca = 100;
  int r_deform = 100;
  int r_eval = 229;
  int u = 500;

  int total() const { return r_pca + r_deform + r_eval + u; }
};

// Scans of random subjects in random poses, ids scan_0000 upward, assigned to
// the splits in order. Registered splits carry the ground-truth canonical
// shapes; `truth` (optional) receives them for every scan.
Dataset synthesize_dataset(const synth::SyntheticFamily& family, const SplitSizes& sizes,
                           const synth::ScanOptions& scan, std::uint64_t seed, std::vector<Vertices>* truth = nullptr);

}  // namespace blisskit::bootstrap
