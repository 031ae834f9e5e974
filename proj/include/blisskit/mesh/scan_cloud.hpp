#pragma once

#include <string>

#include "blisskit/core/types.hpp"

namespace blisskit::mesh {

enum class Provenance { Synthetic, Imported };

inline constexpr int kMinScanPoints = 100;

// Unregistered raw scan: at least kMinScanPoints finite points, optional
// per-point normals (empty matrix when absent).
class ScanCloud {
 public:
  ScanCloud() = default;
  ScanCloud(Points points, Points normals = {}, Provenance provenance = Provenance::Imported);

  const Points& points() const { return points_; }
  const Points& normals() const { return normals_; }
  bool has_normals() const { return normals_.rows() > 0; }
  int size() const { return static_cast<int>(points_.rows()); }
  Provenance provenance() const { return provenance_; }

 private:
  Points points_;
  Points normals_;
  Provenance provenance_ = Provenance::Imported;
};

}  // namespace blisskit::mesh
