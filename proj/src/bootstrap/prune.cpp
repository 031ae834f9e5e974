#include <algorithm>
#include <cmath>

#include "blisskit/bootstrap/bootstrap.hpp"

namespace blisskit::bootstrap {

double prune_threshold(const std::vector<double>& d) {
  if (d.empty()) throw DimensionError("prune: no distances");
  for (double x : d)
    if (!std::isfinite(x)) throw NumericalError("prune: non-finite distance");
  double mean = 0.0;
  for (double x : d) mean += x;
  mean /= static_cast<double>(d.size());
  double var = 0.0;
  for (double x : d) var += (x - mean) * (x - mean);
  var /= static_cast<double>(d.size());
  return *std::min_element(d.begin(), d.end()) + std::sqrt(var);
}

std::vector<int> prune(const std::vector<double>& d) {
  const double th = prune_threshold(d);
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(d.size()); ++i)
    if (d[i] <= th) out.push_back(i);
  return out;
}

}  // namespace blisskit::bootstrap
