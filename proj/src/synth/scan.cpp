#include "blisskit/synth/scan.hpp"

#include <algorithm>
#include <numeric>
#include <queue>

namespace blisskit::synth {

VectorX edge_geodesic(const Vertices& v, const Faces& f, int source) {
  const int n = static_cast<int>(v.rows());
  if (source < 0 || source >= n) throw DimensionError("edge_geodesic: source vertex out of range");
  std::vector<std::vector<int>> nbrs(static_cast<std::size_t>(n));
  for (const auto& e : mesh::unique_edges(f)) {
    nbrs[e[0]].push_back(e[1]);
    nbrs[e[1]].push_back(e[0]);
  }
  VectorX d = VectorX::Constant(n, INFINITY);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  d[source] = 0.0;
  queue.emplace(0.0, source);
  while (!queue.empty()) {
    const auto [dist, i] = queue.top();
    queue.pop();
    if (dist > d[i]) continue;
    for (int j : nbrs[i]) {
      const double nd = dist + (v.row(i) - v.row(j)).norm();
      if (nd < d[j]) {
        d[j] = nd;
        queue.emplace(nd, j);
      }
    }
  }
  return d;
}

Points sample_surface(const Vertices& v, const Faces& f, const ScanOptions& opts, std::mt19937_64& rng) {
  if (opts.num_points < kMinScanDensity)
    throw DimensionError("scan density must be at least " + std::to_string(kMinScanDensity) + " points");
  if (opts.noise_std < 0.0) throw Error("scan noise_std must be non-negative");

  const VectorX area = mesh::face_areas(v, f);
  std::vector<double> cdf(static_cast<std::size_t>(area.size()));
  std::partial_sum(area.data(), area.data() + area.size(), cdf.begin());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);

  std::vector<VectorX> hole_dist;
  for (const Hole& h : opts.holes) hole_dist.push_back(edge_geodesic(v, f, h.vertex));

  Points out(opts.num_points, 3);
  int kept = 0;
  for (int s = 0; s < opts.num_points; ++s) {
    const double r = u(rng) * cdf.back();
    const int k = static_cast<int>(std::min<std::ptrdiff_t>(std::lower_bound(cdf.begin(), cdf.end(), r) - cdf.begin(),
                                                            static_cast<std::ptrdiff_t>(cdf.size()) - 1));
    double a = u(rng), b = u(rng);
    if (a + b > 1.0) {
      a = 1.0 - a;
      b = 1.0 - b;
    }
    const Vec3 p0 = v.row(f(k, 0)).transpose(), p1 = v.row(f(k, 1)).transpose(), p2 = v.row(f(k, 2)).transpose();
    const Vec3 p = p0 + a * (p1 - p0) + b * (p2 - p0);
    const Vec3 noise(g(rng), g(rng), g(rng));

    bool removed = false;
    for (std::size_t h = 0; h < opts.holes.size() && !removed; ++h) {
      double d = INFINITY;
      for (int c = 0; c < 3; ++c) {
        const int vi = f(k, c);
        d = std::min(d, hole_dist[h][vi] + (p - v.row(vi).transpose()).norm());
      }
      removed = d < opts.holes[h].radius;
    }
    if (!removed) out.row(kept++) = (p + opts.noise_std * noise).transpose();
  }
  if (2 * kept < opts.num_points)
    throw GeometryError("hole spec removes more than half of the scan points (" + std::to_string(kept) + " of " +
                        std::to_string(opts.num_points) + " kept)");
  out.conservativeResize(kept, 3);
  return out;
}

SyntheticScan make_scan(const SyntheticFamily& family, const Subject& subject, const rig::Pose& pose,
                        const ScanOptions& opts, std::mt19937_64& rng) {
  SyntheticScan s;
  s.subject = subject;
  s.pose = pose;
  s.canonical = canonical_shape(family, subject);
  s.posed = rig::skin(family.bundle, s.canonical, pose);
  s.scan = mesh::ScanCloud(sample_surface(s.posed, family.bundle.mesh().faces(), opts, rng), {},
                           mesh::Provenance::Synthetic);
  return s;
}

}  // namespace blisskit::synth
