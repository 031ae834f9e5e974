#include "blisskit/fit/nn_index.hpp"

#include <algorithm>
#include <numeric>

#include "blisskit/simd/kernels.hpp"

namespace blisskit::fit {

NnIndex::NnIndex(const Points& points, int leaf_size) {
  const int n = static_cast<int>(points.rows());
  if (n == 0) return;
  std::vector<int> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), 0);
  nodes_.reserve(static_cast<std::size_t>(2 * n / std::max(1, leaf_size) + 2));
  build(ids, 0, n, points, std::max(1, leaf_size));
  index_ = std::move(ids);
  xs_.resize(index_.size());
  ys_.resize(index_.size());
  zs_.resize(index_.size());
  for (std::size_t i = 0; i < index_.size(); ++i) {
    xs_[i] = points(index_[i], 0);
    ys_[i] = points(index_[i], 1);
    zs_[i] = points(index_[i], 2);
  }
}

int NnIndex::build(std::vector<int>& ids, int begin, int end, const Points& pts, int leaf_size) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{begin, end, -1, -1, 0, 0.0});
  if (end - begin <= leaf_size) {
    std::sort(ids.begin() + begin, ids.begin() + end);
    return id;
  }
  Vec3 lo = Vec3::Constant(1e300), hi = Vec3::Constant(-1e300);
  for (int i = begin; i < end; ++i) {
    lo = lo.cwiseMin(pts.row(ids[i]).transpose());
    hi = hi.cwiseMax(pts.row(ids[i]).transpose());
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  const int mid = begin + (end - begin) / 2;
  std::nth_element(ids.begin() + begin, ids.begin() + mid, ids.begin() + end, [&](int a, int b) {
    const double pa = pts(a, axis), pb = pts(b, axis);
    return pa != pb ? pa < pb : a < b;
  });
  const double split = pts(ids[mid], axis);
  const int left = build(ids, begin, mid, pts, leaf_size);
  const int right = build(ids, mid, end, pts, leaf_size);
  nodes_[id].left = left;
  nodes_[id].right = right;
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  return id;
}

std::pair<int, double> NnIndex::nearest(const Vec3& q) const {
  if (index_.empty()) throw DimensionError("NnIndex::nearest on an empty index");
  const simd::Kernels& k = simd::kernels();
  int best = -1;
  double best_d2 = 1e300;
  // Each entry carries a lower bound on the squared distance to its cell.
  struct Entry {
    int node;
    double bound;
  };
  Entry stack[128];
  int top = 0;
  stack[top++] = {0, 0.0};
  const double qa[3] = {q.x(), q.y(), q.z()};
  while (top > 0) {
    const Entry e = stack[--top];
    if (e.bound > best_d2) continue;
    const Node& node = nodes_[e.node];
    if (node.left < 0) {
      double d2 = 0.0;
      const std::size_t local = k.nearest_soa(xs_.data() + node.begin, ys_.data() + node.begin, zs_.data() + node.begin,
                                              static_cast<std::size_t>(node.end - node.begin), qa, &d2);
      const int cand = index_[node.begin + static_cast<int>(local)];
      if (d2 < best_d2 || (d2 == best_d2 && cand < best)) {
        best_d2 = d2;
        best = cand;
      }
      continue;
    }
    const double diff = qa[node.axis] - node.split;
    // Points equal to the split value can sit on either side, so the near
    // side is decided by sign and the far side bounded by diff^2 (zero at ties).
    const int near = diff < 0.0 ? node.left : node.right;
    const int far = diff < 0.0 ? node.right : node.left;
    stack[top++] = {far, std::max(e.bound, diff * diff)};
    stack[top++] = {near, e.bound};
  }
  return {best, best_d2};
}

void NnIndex::nearest_all(const Points& queries, std::vector<int>& idx, VectorX* d2) const {
  idx.resize(static_cast<std::size_t>(queries.rows()));
  if (d2) d2->resize(queries.rows());
  for (int i = 0; i < queries.rows(); ++i) {
    const auto [j, d] = nearest(queries.row(i).transpose());
    idx[static_cast<std::size_t>(i)] = j;
    if (d2) (*d2)[i] = d;
  }
}

}  // namespace blisskit::fit
