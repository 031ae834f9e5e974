#pragma once

#include <utility>
#include <vector>

#include "blisskit/core/types.hpp"

namespace blisskit::fit {

// Static kd-tree for exact nearest-point queries. Leaves store coordinates
// as separate x/y/z arrays and are scanned with the SIMD nearest kernel.
// Ties resolve to the lowest original point index, matching a brute-force scan.
class NnIndex {
 public:
  NnIndex() = default;
  explicit NnIndex(const Points& points, int leaf_size = 16);

  int size() const { return static_cast<int>(index_.size()); }

  // (index, squared distance). Requires a non-empty index.
  std::pair<int, double> nearest(const Vec3& q) const;

  // Nearest point for every query row; d2 may be null.
  void nearest_all(const Points& queries, std::vector<int>& idx, VectorX* d2 = nullptr) const;

 private:
  struct Node {
    int begin = 0, end = 0;    // range in leaf order
    int left = -1, right = -1;  // children; -1 for leaves
    int axis = 0;
    double split = 0.0;
  };
  int build(std::vector<int>& ids, int begin, int end, const Points& pts, int leaf_size);

  std::vector<Node> nodes_;
  std::vector<double> xs_, ys_, zs_;
  std::vector<int> index_;  // leaf order -> original index
};

}  // namespace blisskit::fit
