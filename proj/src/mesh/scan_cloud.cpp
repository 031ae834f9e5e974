#include "blisskit/mesh/scan_cloud.hpp"

namespace blisskit::mesh {

ScanCloud::ScanCloud(Points points, Points normals, Provenance provenance)
    : points_(std::move(points)), normals_(std::move(normals)), provenance_(provenance) {
  if (points_.rows() < kMinScanPoints)
    throw GeometryError("scan has " + std::to_string(points_.rows()) + " points, need at least " +
                        std::to_string(kMinScanPoints));
  if (!points_.allFinite()) throw GeometryError("scan has non-finite coordinates");
  if (normals_.rows() != 0 && normals_.rows() != points_.rows())
    throw DimensionError("scan normals count does not match point count");
}

}  // namespace blisskit::mesh
