#include "blisskit/fit/chamfer.hpp"

namespace blisskit::fit {

namespace {

double one_way(const Points& from, const NnIndex& to) {
  VectorX d2;
  std::vector<int> idx;
  to.nearest_all(from, idx, &d2);
  return d2.mean();
}

}  // namespace

double chamfer(const Points& a, const Points& b, const NnIndex& b_index) {
  if (a.rows() == 0 || b.rows() == 0) throw DimensionError("chamfer: empty point set");
  const NnIndex a_index(a);
  // The two terms commute under addition, so chamfer(a, b) == chamfer(b, a) exactly.
  return one_way(a, b_index) + one_way(b, a_index);
}

double chamfer(const Points& a, const Points& b) {
  if (a.rows() == 0 || b.rows() == 0) throw DimensionError("chamfer: empty point set");
  return chamfer(a, b, NnIndex(b));
}

}  // namespace blisskit::fit
